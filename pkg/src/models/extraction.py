"""Query matrices and stolen-layer results."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from src.models.oracle import Prompt
from src.models.recovery import Normalization
from src.models.victim import Precision


@dataclass
class QueryMatrix:
    """Logit vectors stacked as rows, one per prompt."""

    matrix: np.ndarray
    prompts: list[Prompt]
    precision: Precision = Precision.FP64
    columns: Optional[np.ndarray] = None
    normalization: Optional[Normalization] = None

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2 or self.matrix.shape[0] < 1:
            raise ValueError("query matrix needs at least one row")
        if self.columns is None:
            self.columns = np.arange(self.matrix.shape[1])

    @property
    def n(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def width(self) -> int:
        return int(self.matrix.shape[1])

    def restrict(self, columns: np.ndarray) -> "QueryMatrix":
        """Keep only the given token columns."""
        assert self.columns is not None
        position = {int(c): i for i, c in enumerate(self.columns)}
        idx = np.array([position[int(c)] for c in columns], dtype=np.int64)
        return QueryMatrix(
            matrix=self.matrix[:, idx],
            prompts=list(self.prompts),
            precision=self.precision,
            columns=np.asarray(columns),
            normalization=self.normalization,
        )

    def finite_columns(self) -> "QueryMatrix":
        """Drop columns with any missing or blocked entry."""
        assert self.columns is not None
        keep = np.isfinite(self.matrix).all(axis=0)
        if keep.all():
            return self
        return self.restrict(self.columns[keep])

    def head(self, n: int) -> "QueryMatrix":
        return QueryMatrix(
            matrix=self.matrix[:n],
            prompts=self.prompts[:n],
            precision=self.precision,
            columns=self.columns,
            normalization=self.normalization,
        )

    def extend(self, other: "QueryMatrix") -> "QueryMatrix":
        return QueryMatrix(
            matrix=np.vstack([self.matrix, other.matrix]),
            prompts=self.prompts + other.prompts,
            precision=self.precision,
            columns=self.columns,
            normalization=self.normalization,
        )


@dataclass
class SpectrumReport:
    """Singular values of a query matrix and their multiplicative gaps."""

    singular_values: np.ndarray
    log_gaps: np.ndarray
    gap_index: int

    @property
    def dimension(self) -> int:
        return self.gap_index


class SymmetryKind(str, Enum):
    """Residual ambiguity of a stolen layer."""

    AFFINE = "affine"
    ORTHOGONAL = "orthogonal"


class NormDetection(str, Enum):
    """Outcome of normalization-layer fingerprinting."""

    LAYER_NORM = "layernorm"
    RMS_NORM = "rmsnorm"
    INCONCLUSIVE = "inconclusive"


@dataclass
class EllipsoidFit:
    """Ellipsoid through the projected query points: ||M (x - c)|| = 1."""

    basis: np.ndarray
    origin: np.ndarray
    center: np.ndarray
    transform: np.ndarray

    def project(self, logits: np.ndarray) -> np.ndarray:
        """Coordinates of logit rows in the fitted basis, shifted to the origin query."""
        return (np.atleast_2d(logits) - self.origin) @ self.basis

    def sphere_radii(self, logits: np.ndarray) -> np.ndarray:
        points = self.project(logits)
        return np.linalg.norm((points - self.center) @ self.transform.T, axis=1)


@dataclass
class StolenLayer:
    """Recovered projection matrix W_tilde = W . G for an unknown G."""

    matrix: np.ndarray
    symmetry: SymmetryKind
    normalization: Optional[Normalization] = None
    singular_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ellipsoid: Optional[EllipsoidFit] = None

    @property
    def hidden_dim(self) -> int:
        return int(self.matrix.shape[1])
