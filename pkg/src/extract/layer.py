"""Final-layer extraction up to an affine symmetry, and alignment against the truth."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from src.models.extraction import QueryMatrix, StolenLayer, SymmetryKind
from src.oracle.errors import StealerError


class RankDeficientError(StealerError):
    """Requested more directions than the data supports."""


def numerical_rank(singular_values: np.ndarray, shape: tuple[int, ...]) -> int:
    if len(singular_values) == 0 or singular_values[0] == 0:
        return 0
    tolerance = singular_values[0] * max(shape) * np.finfo(np.float64).eps
    return int(np.sum(singular_values > tolerance))


def extract_layer(query_matrix: QueryMatrix, dim: int) -> StolenLayer:
    """W_tilde = U * Sigma from the rank-`dim` SVD of Q^T; equals W . G for unknown G."""
    if dim < 1:
        raise ValueError("dim must be positive")
    q_t = np.asarray(query_matrix.matrix, dtype=np.float64).T
    u, s, _ = scipy.linalg.svd(q_t, full_matrices=False)
    rank = numerical_rank(s, q_t.shape)
    if dim > rank:
        raise RankDeficientError(
            f"dimension {dim} exceeds the numerical rank {rank} of {query_matrix.n} queries"
        )
    return StolenLayer(
        matrix=u[:, :dim] * s[:dim],
        symmetry=SymmetryKind.AFFINE,
        normalization=query_matrix.normalization,
        singular_values=s,
    )


def align_affine(stolen: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, float]:
    """Least-squares G minimizing ||W_tilde G - W||, one column of W at a time.

    Returns G and the RMS entry error of the aligned matrix.
    """
    stolen = np.asarray(stolen, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if stolen.shape[0] != truth.shape[0]:
        raise ValueError(f"row mismatch: {stolen.shape} vs {truth.shape}")
    g, _, rank, _ = scipy.linalg.lstsq(stolen, truth)
    if rank < stolen.shape[1]:
        raise RankDeficientError(f"stolen matrix has rank {rank} < {stolen.shape[1]} columns")
    rms = float(np.sqrt(np.mean((stolen @ g - truth) ** 2)))
    return g, rms


def principal_angles(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Principal angles in radians between the column spaces of a and b."""
    return scipy.linalg.subspace_angles(a, b)
