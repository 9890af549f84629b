"""Final-layer extraction up to an orthogonal symmetry by ellipsoid fitting.

A normalization layer with unit scale puts hidden states on a sphere, so the
logits lie on an h-dimensional ellipsoid. Shifting every row by the first one
makes the ellipsoid pass through the origin, where it satisfies
x^T A x - 2 d^T x = 0 with d = A c. That system is linear in the entries of
A and d, and its one-dimensional nullspace gives the ellipsoid. Factoring
A = M^T M maps the ellipsoid back onto the unit sphere.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
import scipy.linalg

from src.models.extraction import EllipsoidFit, QueryMatrix, StolenLayer, SymmetryKind
from src.oracle.errors import StealerError

# Ratio between the two smallest singular values of the design matrix
# required for a one-dimensional nullspace.
NULLSPACE_RATIO = 1e3


class DegenerateQueriesError(StealerError):
    """The queries do not pin down a unique non-degenerate ellipsoid."""


def required_queries(dim: int) -> int:
    """Queries needed for a determined system: C(h+1, 2) + h unknowns plus the origin."""
    return math.comb(dim + 1, 2) + dim + 1


def _design_matrix(points: np.ndarray) -> np.ndarray:
    n, h = points.shape
    rows, cols = np.triu_indices(h)
    quadratic = points[:, rows] * points[:, cols]
    quadratic[:, rows != cols] *= 2.0
    return np.hstack([quadratic, -2.0 * points])


def _unpack(solution: np.ndarray, h: int) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = np.triu_indices(h)
    k = len(rows)
    a = np.zeros((h, h))
    a[rows, cols] = solution[:k]
    a[cols, rows] = solution[:k]
    return a, solution[k:]


def extract_layer_orthogonal(query_matrix: QueryMatrix, dim: int) -> StolenLayer:
    """Return U . M^-1, which equals W . O^T up to the sphere's radius."""
    q = np.asarray(query_matrix.matrix, dtype=np.float64)
    origin = q[0]
    shifted = q - origin
    u, _, _ = scipy.linalg.svd(shifted.T, full_matrices=False)
    basis = u[:, :dim]
    points = (shifted @ basis)[1:]

    design = _design_matrix(points)
    if design.shape[0] < design.shape[1]:
        raise DegenerateQueriesError(
            f"{design.shape[0] + 1} queries for {design.shape[1]} unknowns; "
            f"need at least {required_queries(dim)}"
        )
    _, s, vt = scipy.linalg.svd(design, full_matrices=False)
    if s[-1] > 0 and s[-2] / s[-1] < NULLSPACE_RATIO:
        raise DegenerateQueriesError(
            f"design nullspace is not one-dimensional (singular value ratio {s[-2] / s[-1]:.1f})"
        )
    a, d = _unpack(vt[-1], dim)

    try:
        center = scipy.linalg.solve(a, d, assume_a="sym")
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise DegenerateQueriesError(f"quadratic form is singular: {e}") from e
    a = a / float(center @ a @ center)
    try:
        transform = scipy.linalg.cholesky(a, lower=False)
    except scipy.linalg.LinAlgError as e:
        raise DegenerateQueriesError("fitted quadratic form is not positive definite") from e

    stolen = basis @ scipy.linalg.inv(transform)
    return StolenLayer(
        matrix=stolen,
        symmetry=SymmetryKind.ORTHOGONAL,
        normalization=query_matrix.normalization,
        ellipsoid=EllipsoidFit(basis=basis, origin=origin, center=center, transform=transform),
    )


def orthogonal_residual(
    stolen: np.ndarray, truth: np.ndarray, radius: Optional[float] = None
) -> np.ndarray:
    """O with W = W_tilde . O / radius; orthogonal when the extraction succeeded.

    `radius` is the norm of the hidden states, sqrt(h) for a unit-scale RMSNorm.
    """
    if radius is None:
        radius = math.sqrt(stolen.shape[1])
    return radius * scipy.linalg.pinv(stolen) @ truth
