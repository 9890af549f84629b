"""Tests for hidden-dimension and final-layer extraction."""

import numpy as np
import pandas as pd
import pytest

from src.analysis.metrics import aligned_rms, orthogonality_error, random_baseline_rms
from src.extract import (
    DegenerateQueriesError,
    NeedMoreQueriesError,
    RankDeficientError,
    collect_query_matrix,
    detect_norm_layer,
    extract_hidden_dim,
    extract_layer,
    extract_layer_orthogonal,
    orthogonal_residual,
    principal_angles,
    required_queries,
    spectrum_plot_data,
    steal_hidden_dim,
    write_spectrum_csv,
)
from src.models.extraction import NormDetection, QueryMatrix, SymmetryKind
from src.models.oracle import ApiMode
from src.models.recovery import Normalization
from src.models.victim import NormKind, Precision, VictimSpec
from src.oracle.errors import CapabilityError
from src.recover import recover_reference_token
from src.victim.builder import build_victim
from tests.conftest import make_session


class TestCollectQueryMatrix:
    """Tests for stacking logit vectors."""

    @pytest.mark.asyncio
    async def test_shape_and_cost(self, all_logits_session):
        matrix = await collect_query_matrix(all_logits_session, 32)

        assert matrix.matrix.shape == (32, 100)
        assert len(set(matrix.prompts)) == 32
        assert all_logits_session.ledger.queries == 32

    @pytest.mark.asyncio
    async def test_start_continues_sequence(self, all_logits_session):
        full = await collect_query_matrix(all_logits_session, 10)
        tail = await collect_query_matrix(all_logits_session, 5, start=5)
        np.testing.assert_array_equal(tail.matrix, full.matrix[5:])

    @pytest.mark.asyncio
    async def test_blocked_columns_dropped(self, tiny_victim):
        session = make_session(tiny_victim, ApiMode.ALL_LOGITS, blocked_tokens=[1, 2])
        matrix = await collect_query_matrix(session, 32)

        assert matrix.width == 98
        assert 1 not in matrix.columns and 2 not in matrix.columns
        dim, _ = extract_hidden_dim(matrix)
        assert dim == 8

    @pytest.mark.asyncio
    async def test_token_subset(self, all_logits_session):
        matrix = await collect_query_matrix(all_logits_session, 4, token_subset=[9, 3, 3])
        np.testing.assert_array_equal(matrix.columns, [3, 9])

    @pytest.mark.asyncio
    async def test_needs_full_logits_or_recoverer(self, topk_session):
        with pytest.raises(CapabilityError):
            await collect_query_matrix(topk_session, 4)

    @pytest.mark.asyncio
    async def test_through_recoverer(self, topk_session):
        """Rows recovered through top-K logprobs still expose the hidden dimension."""
        matrix = await collect_query_matrix(topk_session, 32, recoverer=recover_reference_token)

        assert matrix.normalization == Normalization.REFERENCE_TOKEN_ZERO
        np.testing.assert_array_equal(matrix.matrix[:, 0], 0.0)
        dim, _ = extract_hidden_dim(matrix)
        assert dim == 8


class TestHiddenDim:
    """Tests for rank-based dimension extraction."""

    @pytest.mark.asyncio
    async def test_tiny(self, all_logits_session):
        matrix = await collect_query_matrix(all_logits_session, 32)
        dim, report = extract_hidden_dim(matrix)

        assert dim == 8
        assert report.dimension == 8
        assert report.log_gaps[7] > 10.0

    @pytest.mark.asyncio
    async def test_steal_doubles_until_stable(self, all_logits_session):
        dim, _, matrix = await steal_hidden_dim(all_logits_session, expected=8)

        assert dim == 8
        assert matrix.n == 32
        assert all_logits_session.ledger.queries == 32

    @pytest.mark.asyncio
    async def test_steal_query_cap(self, all_logits_session):
        with pytest.raises(NeedMoreQueriesError):
            await steal_hidden_dim(all_logits_session, expected=8, max_queries=16)

    @pytest.mark.asyncio
    async def test_planted_rank_deficit(self):
        victim = build_victim(VictimSpec(l=60, h=10, seed=4, planted_rank_deficit=3))
        session = make_session(victim, ApiMode.ALL_LOGITS)
        matrix = await collect_query_matrix(session, 40)

        dim, _ = extract_hidden_dim(matrix)
        assert dim == 7

    @pytest.mark.asyncio
    async def test_fp16_victim(self):
        victim = build_victim(VictimSpec(l=200, h=16, seed=6, precision=Precision.FP16))
        session = make_session(victim, ApiMode.ALL_LOGITS)
        matrix = await collect_query_matrix(session, 64)

        dim, _ = extract_hidden_dim(matrix)
        assert dim == 16

    def test_single_row(self):
        matrix = QueryMatrix(matrix=np.ones((1, 10)), prompts=[(1,)])
        with pytest.raises(NeedMoreQueriesError):
            extract_hidden_dim(matrix)

    def test_no_interior_gap(self):
        matrix = QueryMatrix(matrix=np.ones((5, 1)), prompts=[(i,) for i in range(5)])
        with pytest.raises(NeedMoreQueriesError) as excinfo:
            extract_hidden_dim(matrix)
        assert excinfo.value.report is not None

    def test_small_cliff_accepted(self):
        """A 3.5x drop is as good a cliff as any when it is the largest one."""
        rng = np.random.default_rng(0)
        left, _ = np.linalg.qr(rng.standard_normal((12, 12)))
        right, _ = np.linalg.qr(rng.standard_normal((100, 12)))
        values = np.array([1.0, 0.9, 0.8, 0.7] + [0.2] * 8)
        matrix = QueryMatrix(
            matrix=left @ np.diag(values) @ right.T, prompts=[(i,) for i in range(12)]
        )

        dim, report = extract_hidden_dim(matrix)
        assert dim == 4
        assert report.log_gaps[3] == pytest.approx(np.log(3.5))

    @pytest.mark.asyncio
    @pytest.mark.parametrize("vocab", [256, 1000])
    async def test_fp16_cliff_across_seeds(self, vocab):
        """fp16 compute blurs the cliff to under 10x; it still lands at h."""
        dims = []
        for seed in range(6):
            victim = build_victim(VictimSpec(l=vocab, h=64, seed=seed, precision=Precision.FP16))
            session = make_session(victim, ApiMode.ALL_LOGITS)
            dim, _, _ = await steal_hidden_dim(session, expected=64, max_queries=4 * vocab)
            dims.append(dim)
        assert dims == [64] * 6

    @pytest.mark.asyncio
    @pytest.mark.parametrize(
        "hidden", [8, 64, pytest.param(256, marks=pytest.mark.slow)]
    )
    async def test_exact_over_twenty_seeds(self, hidden):
        for seed in range(20):
            victim = build_victim(VictimSpec(l=4 * hidden, h=hidden, seed=seed))
            session = make_session(victim, ApiMode.ALL_LOGITS)
            dim, _, _ = await steal_hidden_dim(session, expected=hidden)
            assert dim == hidden, f"seed {seed}"


class TestExtractLayer:
    """Tests for affine-symmetry layer extraction."""

    @pytest.mark.asyncio
    async def test_aligns_with_truth(self, all_logits_session, tiny_victim):
        matrix = await collect_query_matrix(all_logits_session, 32)
        stolen = extract_layer(matrix, 8)

        assert stolen.matrix.shape == (100, 8)
        assert stolen.symmetry == SymmetryKind.AFFINE
        assert aligned_rms(stolen.matrix, tiny_victim.weights) < 1e-10
        assert principal_angles(stolen.matrix, tiny_victim.weights).max() < 1e-8

    @pytest.mark.asyncio
    async def test_rank_deficient(self, all_logits_session):
        matrix = await collect_query_matrix(all_logits_session, 32)
        with pytest.raises(RankDeficientError):
            extract_layer(matrix, 20)

    def test_positive_dim(self):
        matrix = QueryMatrix(matrix=np.ones((2, 3)), prompts=[(1,), (2,)])
        with pytest.raises(ValueError):
            extract_layer(matrix, 0)

    @pytest.mark.asyncio
    async def test_full_size_fp64(self):
        victim = build_victim(VictimSpec(l=1000, h=64, seed=11))
        session = make_session(victim, ApiMode.ALL_LOGITS)
        matrix = await collect_query_matrix(session, 256)
        stolen = extract_layer(matrix, 64)

        error = aligned_rms(stolen.matrix, victim.weights)
        assert error < 1e-9
        assert random_baseline_rms(victim.weights, 64) > 100 * error

    @pytest.mark.asyncio
    async def test_fp16_emission(self):
        """Logits rounded to fp16 on the way out still give the layer well inside 5e-4."""
        for seed in range(3):
            victim = build_victim(VictimSpec(l=1000, h=64, seed=seed))
            session = make_session(
                victim, ApiMode.ALL_LOGITS, logprob_precision=Precision.FP16
            )
            matrix = await collect_query_matrix(session, 512)
            stolen = extract_layer(matrix, 64)

            error = aligned_rms(stolen.matrix, victim.weights)
            assert error < 5e-4, f"seed {seed}"
            assert random_baseline_rms(victim.weights, 64) > 100 * error


class TestOrthogonalExtraction:
    """Tests for the ellipsoid fit on unit-scale normalized victims."""

    def test_required_queries(self):
        assert required_queries(16) == 136 + 16 + 1

    @pytest.mark.asyncio
    async def test_recovers_up_to_rotation(self, sphere_victim):
        session = make_session(sphere_victim, ApiMode.ALL_LOGITS)
        matrix = await collect_query_matrix(session, required_queries(16) + 8)
        stolen = extract_layer_orthogonal(matrix, 16)

        assert stolen.symmetry == SymmetryKind.ORTHOGONAL
        residual = orthogonal_residual(stolen.matrix, sphere_victim.weights)
        assert orthogonality_error(residual) < 1e-6

    @pytest.mark.asyncio
    async def test_points_on_unit_sphere(self, sphere_victim):
        session = make_session(sphere_victim, ApiMode.ALL_LOGITS)
        matrix = await collect_query_matrix(session, required_queries(16) + 8)
        stolen = extract_layer_orthogonal(matrix, 16)

        radii = stolen.ellipsoid.sphere_radii(matrix.matrix)
        np.testing.assert_allclose(radii, 1.0, atol=1e-6)

    @pytest.mark.asyncio
    async def test_too_few_queries(self, sphere_victim):
        session = make_session(sphere_victim, ApiMode.ALL_LOGITS)
        matrix = await collect_query_matrix(session, 50)
        with pytest.raises(DegenerateQueriesError):
            extract_layer_orthogonal(matrix, 16)


class TestNormDetection:
    """Tests for LayerNorm vs RMSNorm fingerprinting."""

    @pytest.mark.asyncio
    async def test_layer_norm(self, layernorm_victim):
        session = make_session(layernorm_victim, ApiMode.ALL_LOGITS)
        matrix = await collect_query_matrix(session, 32)
        assert detect_norm_layer(matrix) == NormDetection.LAYER_NORM

    @pytest.mark.asyncio
    async def test_rms_norm(self, rmsnorm_bias_victim):
        session = make_session(rmsnorm_bias_victim, ApiMode.ALL_LOGITS)
        matrix = await collect_query_matrix(session, 32)
        assert detect_norm_layer(matrix) == NormDetection.RMS_NORM

    @pytest.mark.asyncio
    @pytest.mark.parametrize(
        "kind,bias,expected",
        [
            (NormKind.LAYER_NORM, True, NormDetection.LAYER_NORM),
            (NormKind.RMS_NORM, False, NormDetection.RMS_NORM),
            (NormKind.RMS_NORM, True, NormDetection.RMS_NORM),
        ],
    )
    async def test_twenty_seeds(self, kind, bias, expected):
        for seed in range(20):
            victim = build_victim(
                VictimSpec(l=100, h=8, seed=seed, norm_kind=kind, norm_bias_enabled=bias)
            )
            session = make_session(victim, ApiMode.ALL_LOGITS)
            matrix = await collect_query_matrix(session, 32)
            assert detect_norm_layer(matrix) == expected, f"seed {seed}"

    @pytest.mark.asyncio
    async def test_layer_norm_without_bias(self):
        """Without a bias the states sit in an (h-1)-dim subspace and mimic a narrower RMSNorm."""
        victim = build_victim(VictimSpec(l=100, h=8, seed=13, norm_kind=NormKind.LAYER_NORM))
        session = make_session(victim, ApiMode.ALL_LOGITS)
        matrix = await collect_query_matrix(session, 32)

        assert extract_hidden_dim(matrix)[0] == 7
        assert detect_norm_layer(matrix) == NormDetection.RMS_NORM
        assert detect_norm_layer(matrix, hidden_dim=8) == NormDetection.INCONCLUSIVE


class TestSpectrumOutput:
    """Tests for spectrum tables."""

    @pytest.mark.asyncio
    async def test_plot_data(self, all_logits_session):
        matrix = await collect_query_matrix(all_logits_session, 32)
        _, report = extract_hidden_dim(matrix)
        frame = spectrum_plot_data(report)

        assert list(frame.columns) == ["index", "singular_value", "log_gap"]
        assert len(frame) == 32
        assert frame["index"].iloc[0] == 1
        assert np.isnan(frame["log_gap"].iloc[-1])

    @pytest.mark.asyncio
    async def test_write_csv(self, tmp_path, all_logits_session):
        matrix = await collect_query_matrix(all_logits_session, 32)
        _, report = extract_hidden_dim(matrix)
        path = write_spectrum_csv(report, tmp_path / "out" / "spectrum.csv")

        frame = pd.read_csv(path)
        assert len(frame) == 32
        assert frame["singular_value"].is_monotonic_decreasing
