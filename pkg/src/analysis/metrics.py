"""Agreement metrics between stolen and true quantities."""

from typing import Optional, Union

import numpy as np

from src.extract.layer import align_affine
from src.models.recovery import IntervalBounds, RecoveredLogits
from src.oracle.errors import StealerError

# fp64 carries 52 fraction bits; exact agreement is reported at this cap.
MAX_BITS = 52.0


class UndefinedMetricError(StealerError):
    """No entry is available to compare."""


def _as_recovered(recovered: Union[RecoveredLogits, IntervalBounds], size: int) -> RecoveredLogits:
    if isinstance(recovered, IntervalBounds):
        return recovered.to_recovered(size)
    return recovered


def bits_of_precision(
    true_logits: np.ndarray,
    recovered: Union[RecoveredLogits, IntervalBounds],
    max_bits: float = MAX_BITS,
) -> float:
    """-log2 of the mean absolute error after the best additive shift.

    The median of the residuals is the shift minimizing the mean absolute
    error, so any normalization of the recovered vector scores the same.
    Missing, unreachable and blocked entries are left out; count them with
    `RecoveredLogits.missing_count`.
    """
    truth = np.asarray(true_logits, dtype=np.float64)
    result = _as_recovered(recovered, len(truth))
    if result.vocab_size != len(truth):
        raise ValueError(f"length mismatch: {result.vocab_size} recovered vs {len(truth)} true")

    values = np.asarray(result.values, dtype=np.float64)
    keep = result.known_mask & np.isfinite(truth) & np.isfinite(values)
    if not keep.any():
        raise UndefinedMetricError("every recovered entry is missing")

    residual = values[keep] - truth[keep]
    shift = float(np.median(residual))
    error = float(np.mean(np.abs(residual - shift)))
    if error == 0.0:
        return max_bits
    return float(min(-np.log2(error), max_bits))


def rms(a: np.ndarray, b: np.ndarray) -> float:
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.sqrt(np.mean(diff**2)))


def aligned_rms(stolen: np.ndarray, truth: np.ndarray) -> float:
    """RMS entry error of the stolen layer after the best affine alignment."""
    return align_affine(stolen, truth)[1]


def normalized_rms(stolen: np.ndarray, truth: np.ndarray) -> float:
    """Aligned RMS with both matrices scaled to unit Frobenius norm first."""
    stolen = np.asarray(stolen, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    return aligned_rms(stolen / np.linalg.norm(stolen), truth / np.linalg.norm(truth))


def random_baseline_rms(truth: np.ndarray, dim: Optional[int] = None, seed: int = 0) -> float:
    """Aligned RMS of a random Gaussian matrix of the stolen shape against the truth."""
    truth = np.asarray(truth, dtype=np.float64)
    rng = np.random.default_rng(seed)
    guess = rng.standard_normal((truth.shape[0], dim or truth.shape[1])) * truth.std()
    return aligned_rms(guess, truth)


def orthogonality_error(matrix: np.ndarray) -> float:
    """Frobenius distance of O^T O from the identity."""
    matrix = np.asarray(matrix, dtype=np.float64)
    return float(np.linalg.norm(matrix.T @ matrix - np.eye(matrix.shape[1])))
