"""Tests for synthetic victims and their ground truth."""

import numpy as np
import pytest

from src.models.victim import Precision, VictimConfigError, VictimSpec
from src.victim.builder import build_victim
from src.victim.config import dump_victim_spec, load_victim_presets, load_victim_spec
from src.victim.model import TokenRangeError
from src.victim.numerics import log_softmax, quantize_columns
from src.victim.prompts import random_prompts
from src.victim.spoofing import apply_spoofing, argmax_agreement
from src.victim.truth_io import (
    MAGIC,
    MatrixFormatError,
    decode_matrix,
    encode_matrix,
    read_matrix,
    write_matrix,
)
from tests.conftest import PROMPT


class TestVictimSpec:
    """Tests for victim specification invariants."""

    def test_aliases(self):
        """l and h populate vocab_size and hidden_dim."""
        spec = VictimSpec(l=50, h=4)
        assert spec.vocab_size == 50
        assert spec.hidden_dim == 4
        assert spec.effective_rank == 4
        assert not spec.has_defenses

    def test_hidden_dim_must_be_below_vocab(self):
        with pytest.raises(ValueError, match="smaller than vocab_size"):
            VictimSpec(l=8, h=8)

    def test_rank_deficit_below_hidden_dim(self):
        with pytest.raises(ValueError, match="planted_rank_deficit"):
            VictimSpec(l=50, h=4, planted_rank_deficit=4)

    def test_spoof_target_bounds(self):
        with pytest.raises(ValueError, match="must exceed"):
            VictimSpec(l=50, h=4, spoof_target_dim=4)
        with pytest.raises(ValueError, match="must be below"):
            VictimSpec(l=50, h=4, spoof_target_dim=50)

    def test_quantization_bits(self):
        with pytest.raises(ValueError):
            VictimSpec(l=50, h=4, weight_quantization_bits=6)
        assert VictimSpec(l=50, h=4, weight_quantization_bits=8).has_defenses

    def test_with_seed(self, tiny_spec):
        reseeded = tiny_spec.with_seed(99)
        assert reseeded.seed == 99
        assert reseeded.vocab_size == tiny_spec.vocab_size


class TestBuildVictim:
    """Tests for deterministic victim construction."""

    def test_identical_specs_are_bit_identical(self, tiny_spec):
        a = build_victim(tiny_spec)
        b = build_victim(tiny_spec)

        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.logits(PROMPT), b.logits(PROMPT))

    def test_seed_changes_weights(self, tiny_spec):
        a = build_victim(tiny_spec)
        b = build_victim(tiny_spec.with_seed(2))
        assert not np.allclose(a.weights, b.weights)

    def test_logits_are_w_times_hidden(self, tiny_victim):
        hidden = tiny_victim.hidden(PROMPT)
        np.testing.assert_allclose(
            tiny_victim.logits(PROMPT), tiny_victim.weights @ hidden, atol=1e-12
        )

    def test_batch_matches_single(self, tiny_victim):
        prompts = random_prompts(5, tiny_victim.vocab_size, seed=3)
        batch = tiny_victim.logits_batch(prompts)
        for row, prompt in zip(batch, prompts):
            np.testing.assert_allclose(row, tiny_victim.logits(prompt), rtol=1e-12, atol=1e-14)

    def test_planted_rank_deficit(self):
        victim = build_victim(VictimSpec(l=60, h=10, seed=4, planted_rank_deficit=3))
        assert victim.weights.shape == (60, 10)
        assert np.linalg.matrix_rank(victim.weights) == 7

    def test_rms_norm_scale(self, sphere_victim):
        """Unit-scale RMSNorm puts every hidden state at radius sqrt(h)."""
        prompts = random_prompts(10, sphere_victim.vocab_size, seed=0)
        norms = np.linalg.norm(sphere_victim.hidden_batch(prompts), axis=1)
        np.testing.assert_allclose(norms, np.sqrt(16), rtol=1e-12)

    def test_layer_norm_centers(self, layernorm_victim):
        """Without the bias, LayerNorm states sum to zero after dividing out the scale."""
        victim = layernorm_victim
        hidden = victim.hidden(PROMPT) - victim.norm_bias
        assert abs(np.sum(hidden / victim.norm_scale)) < 1e-10

    def test_token_range(self, tiny_victim):
        with pytest.raises(TokenRangeError):
            tiny_victim.logits((0, 100))
        with pytest.raises(TokenRangeError):
            tiny_victim.logits(())

    def test_fp16_logits_are_representable(self):
        victim = build_victim(VictimSpec(l=60, h=8, seed=2, precision=Precision.FP16))
        logits = victim.logits(PROMPT)
        assert np.array_equal(logits.astype(np.float16).astype(np.float64), logits)

    def test_fp16_close_to_fp64(self):
        spec = VictimSpec(l=60, h=8, seed=2)
        exact = build_victim(spec).logits(PROMPT)
        half = build_victim(spec.model_copy(update={"precision": Precision.FP16})).logits(PROMPT)
        assert not np.array_equal(exact, half)
        np.testing.assert_allclose(half, exact, atol=0.05)

    def test_with_weights(self, tiny_victim):
        weights = np.eye(20, 8)
        victim = tiny_victim.with_weights(weights)
        assert victim.vocab_size == 20
        np.testing.assert_allclose(victim.logits(PROMPT), tiny_victim.hidden(PROMPT) @ weights.T)


class TestDefendedVictims:
    """Tests for noise, quantization and spoofing."""

    def test_noise_keyed_by_prompt(self, tiny_spec):
        noisy = build_victim(tiny_spec.model_copy(update={"logit_noise_sigma": 0.1}))
        clean = build_victim(tiny_spec)

        assert np.array_equal(noisy.logits(PROMPT), noisy.logits(PROMPT))
        diff = noisy.logits(PROMPT) - clean.logits(PROMPT)
        assert 0.05 < diff.std() < 0.2

    def test_iid_noise_differs_per_query(self, tiny_spec):
        noisy = build_victim(
            tiny_spec.model_copy(update={"logit_noise_sigma": 0.1, "noise_iid": True})
        )
        assert not np.array_equal(noisy.logits(PROMPT), noisy.logits(PROMPT))

    def test_quantization(self, tiny_spec):
        victim = build_victim(tiny_spec.model_copy(update={"weight_quantization_bits": 4}))
        levels = 2**3 - 1
        scale = np.abs(victim.weights).max(axis=0) / levels

        assert not np.array_equal(victim.projection, victim.weights)
        steps = victim.projection / scale
        np.testing.assert_allclose(steps, np.round(steps), atol=1e-9)
        assert np.abs(steps).max() <= levels + 1e-9

    def test_quantize_columns_identity_on_grid(self):
        weights = np.array([[1.0, -2.0], [0.5, 1.0], [-1.0, 0.0]])
        np.testing.assert_allclose(quantize_columns(weights, 8), weights, atol=2 / 127)

    def test_spoofing_widens_rank(self, tiny_spec):
        spoofed = build_victim(tiny_spec.model_copy(update={"spoof_target_dim": 12}))
        prompts = random_prompts(40, spoofed.vocab_size, seed=5)

        assert spoofed.projection.shape == (100, 12)
        assert spoofed.spoof_dim == 4
        assert np.linalg.matrix_rank(spoofed.logits_batch(prompts)) == 12

    def test_spoofing_preserves_argmax(self, tiny_spec):
        original = build_victim(tiny_spec)
        spoofed = build_victim(tiny_spec.model_copy(update={"spoof_target_dim": 12}))
        assert argmax_agreement(original, spoofed) >= 0.99

    def test_spoofing_extension_orthogonal_to_range(self, tiny_spec):
        spoofed = build_victim(tiny_spec.model_copy(update={"spoof_target_dim": 12}))
        extra = spoofed.projection[:, 8:]
        assert np.abs(spoofed.weights.T @ extra).max() < 1e-10

    def test_spoofing_quantized_extension_orthogonal_to_served(self, tiny_spec):
        spec = tiny_spec.model_copy(update={"weight_quantization_bits": 4, "spoof_target_dim": 12})
        spoofed = build_victim(spec)
        served = spoofed.projection[:, :8]

        np.testing.assert_array_equal(served, quantize_columns(spoofed.weights, 4))
        assert np.abs(served.T @ spoofed.projection[:, 8:]).max() < 1e-10

    def test_spoofing_logs_reduced_fraction(self, tiny_victim, monkeypatch):
        lines = []

        def record(component, message, level="info"):
            lines.append((message, level))

        monkeypatch.setattr("src.victim.spoofing.log", record)
        spoofed = apply_spoofing(tiny_victim, 12, singular_fraction=1.0, noise_scale=50.0)

        assert argmax_agreement(tiny_victim, spoofed) >= 0.99
        assert len(lines) == 1
        message, level = lines[0]
        assert level == "warning"
        assert "singular fraction reduced from 1 to" in message


class TestPrompts:
    """Tests for seeded prompt generation."""

    def test_prefix_consistent(self):
        short = random_prompts(10, 100, seed=4)
        long = random_prompts(25, 100, seed=4)
        assert long[:10] == short

    def test_distinct(self):
        prompts = random_prompts(200, 50, seed=0)
        assert len(set(prompts)) == 200
        assert all(1 <= len(p) <= 8 for p in prompts)

    def test_exhausted_vocabulary(self):
        with pytest.raises(ValueError):
            random_prompts(10, 2, seed=0, min_length=1, max_length=1)


class TestNumerics:
    """Tests for precision helpers."""

    def test_log_softmax_normalizes(self):
        logprobs = log_softmax(np.array([1.0, 2.0, 3.0]))
        assert abs(np.exp(logprobs).sum() - 1.0) < 1e-15

    def test_log_softmax_keeps_blocked(self):
        logprobs = log_softmax(np.array([0.0, -np.inf, 1.0]))
        assert logprobs[1] == -np.inf


class TestVictimConfig:
    """Tests for victim YAML presets."""

    def test_presets_load(self):
        presets = load_victim_presets()
        assert presets["tiny"].vocab_size == 100
        assert presets["gpt2_small_like"].effective_rank == 757
        assert presets["noisy"].logit_noise_sigma == 0.001
        assert presets["spoofed"].spoof_target_dim == 1024

    def test_unknown_preset(self):
        with pytest.raises(VictimConfigError, match="unknown victim preset"):
            load_victim_spec(preset="missing")

    def test_dump_and_load(self, tmp_path, tiny_spec):
        noisy = tiny_spec.model_copy(update={"logit_noise_sigma": 0.01})
        path = dump_victim_spec(noisy, tmp_path / "v.yaml")
        loaded = load_victim_spec(path)
        assert loaded.vocab_size == 100
        assert loaded.logit_noise_sigma == 0.01


class TestTruthIO:
    """Tests for the binary matrix format."""

    def test_layout(self):
        matrix = np.arange(6, dtype=np.float64).reshape(2, 3)
        payload = encode_matrix(matrix)

        assert payload[:8] == MAGIC
        assert int.from_bytes(payload[8:12], "little") == 2
        assert int.from_bytes(payload[12:16], "little") == 3
        assert len(payload) == 16 + 6 * 8
        assert np.frombuffer(payload[16:24], dtype="<f8")[0] == 0.0

    def test_file_round_trip(self, tmp_path, tiny_victim):
        path = write_matrix(tmp_path / "w.bin", tiny_victim.weights)
        np.testing.assert_array_equal(read_matrix(path), tiny_victim.weights)

    def test_bad_magic(self):
        with pytest.raises(MatrixFormatError):
            decode_matrix(b"NOTAMATRIX" + bytes(10))

    def test_truncated(self):
        payload = encode_matrix(np.ones((2, 2)))
        with pytest.raises(MatrixFormatError):
            decode_matrix(payload[:-8])
