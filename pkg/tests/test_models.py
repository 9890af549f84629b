"""Tests for data models."""

import numpy as np
import pytest
from pydantic import ValidationError

from src.models.experiment import AttackName, AttackSettings, ExperimentConfig, RunMetrics
from src.models.oracle import ApiConfig, ApiMode, LogitBias, TopKResponse
from src.models.recovery import EntryStatus, IntervalBounds, Normalization, RecoveredLogits
from src.models.victim import VictimSpec


class TestApiConfig:
    """Tests for API surface validation."""

    def test_defaults(self):
        config = ApiConfig()
        assert config.mode == ApiMode.TOPK_LOGPROBS
        assert config.k == 5
        assert config.bias_bound == 100.0
        assert config.bias_max_entries == 300
        assert config.charge_rejected

    def test_binary_mode_needs_top1(self):
        with pytest.raises(ValidationError, match="k=1"):
            ApiConfig(mode=ApiMode.TOP1_BINARY_BIAS, k=5)
        assert ApiConfig(mode=ApiMode.TOP1_BINARY_BIAS, k=1).returns_logprobs

    def test_positive_bias_bound(self):
        with pytest.raises(ValidationError):
            ApiConfig(bias_bound=0)

    def test_descriptor(self):
        descriptor = ApiConfig(mode=ApiMode.ARGMAX_ONLY).descriptor()
        assert descriptor["mode"] == "argmax_only"
        assert "blocked_tokens" not in descriptor


class TestLogitBias:
    """Tests for sparse bias vectors."""

    def test_wire_keys(self):
        bias = LogitBias.from_wire({"3": 1.5, "10": -2})
        assert bias.entries == {3: 1.5, 10: -2.0}
        assert bias.to_wire() == {"3": 1.5, "10": -2.0}

    def test_dense(self):
        dense = LogitBias.uniform([1, 4], 2.0).dense(6)
        np.testing.assert_array_equal(dense, [0, 2, 0, 0, 2, 0])

    def test_empty(self):
        assert LogitBias().is_empty
        assert LogitBias.uniform([1], 0.0).is_empty
        assert not LogitBias.uniform([1], 0.5).is_empty

    def test_violation(self):
        assert LogitBias.uniform([1], 100.0).violation(100.0, 300, 10) is None
        assert "outside [-100.0, 100.0]" in LogitBias.uniform([1], -101.0).violation(100.0, 300, 10)
        assert "cap" in LogitBias.uniform(range(4), 1.0).violation(100.0, 3, 10)
        assert "vocabulary" in LogitBias.uniform([-1], 1.0).violation(100.0, 300, 10)
        assert LogitBias.uniform([1], float("nan")).violation(100.0, 300, 10) is not None


class TestTopKResponse:
    def test_mapping_order(self):
        response = TopKResponse.from_mapping({7: -0.1, 2: -2.5}, generated=7)
        assert response.tokens == [7, 2]
        assert response.top_token == 7
        assert response.logprob(2) == -2.5
        assert response.logprob(3) is None


class TestRecoveredLogits:
    """Tests for recovery result bookkeeping."""

    def test_counts(self):
        recovered = RecoveredLogits.empty(5, Normalization.REFERENCE_TOKEN_ZERO, reference_token=0)
        recovered.set(0, 0.0)
        recovered.set(1, -1.0)
        recovered.set(2, -3.0, EntryStatus.LOW_CONFIDENCE)
        recovered.status[3] = EntryStatus.UNREACHABLE

        assert recovered.missing_tokens == [3, 4]
        assert recovered.logits_recovered == 2
        assert not recovered.is_complete

    def test_interval_to_recovered(self):
        bounds = IntervalBounds(
            alpha=np.array([0.0, -4.0, -np.inf]),
            beta=np.array([0.0, -2.0, -100.0]),
            tokens=np.array([1, 0, 2]),
            status=[EntryStatus.EXACT, EntryStatus.INTERVAL, EntryStatus.UNREACHABLE],
        )
        recovered = bounds.to_recovered(3)

        assert recovered.reference_token == 1
        assert recovered.values[0] == -3.0
        assert recovered.status[2] == EntryStatus.UNREACHABLE
        assert bounds.mean_width == 2.0


class TestExperimentConfig:
    """Tests for suite validation."""

    def test_needs_a_victim(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(victims=[])

    def test_noise_sigmas(self):
        spec = VictimSpec(l=20, h=4)
        with pytest.raises(ValidationError, match="noise sigmas"):
            ExperimentConfig(victims=[spec], noise_sigmas=[0.0, -1.0])
        with pytest.raises(ValidationError):
            ExperimentConfig(victims=[spec], noise_sigmas=[float("inf")])

    def test_display_name(self):
        assert AttackSettings(name=AttackName.ONE_OF_N).display_name == "one_of_n"
        assert AttackSettings(name=AttackName.ONE_OF_N, label="1-of-n").display_name == "1-of-n"

    def test_run_metrics_rates(self):
        run = RunMetrics(victim="v", attack="a", seed=0, mode="argmax_only", queries=50, tokens=200)
        assert run.queries_per_logit is None
        run.logits = 25
        assert run.queries_per_logit == 2.0
        assert run.tokens_per_logit == 8.0
        assert list(run.to_row())[:6] == ["victim", "attack", "defense", "setting", "mode", "seed"]
