"""Recovered logit vectors and logit-difference enclosures."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np


class EntryStatus(str, Enum):
    """Per-token outcome of a recovery."""

    EXACT = "exact"
    INTERVAL = "interval"
    LOW_CONFIDENCE = "low_confidence"
    MISSING = "missing"
    UNREACHABLE = "unreachable"


UNKNOWN_STATUSES = (EntryStatus.MISSING, EntryStatus.UNREACHABLE)


class Normalization(str, Enum):
    """Which additive shift of the logits a recovery reports."""

    REFERENCE_TOKEN_ZERO = "reference_token_zero"
    UNIT_NORMALIZER = "unit_normalizer"


@dataclass
class RecoveredLogits:
    """A full logit vector recovered up to the softmax's additive symmetry."""

    values: np.ndarray
    normalization: Normalization
    status: list[EntryStatus]
    reference_token: Optional[int] = None
    queries: int = 0
    retries: int = 0

    @property
    def vocab_size(self) -> int:
        return len(self.values)

    @property
    def known_mask(self) -> np.ndarray:
        return np.array([s not in UNKNOWN_STATUSES for s in self.status], dtype=bool)

    @property
    def missing_tokens(self) -> list[int]:
        return [i for i, s in enumerate(self.status) if s in UNKNOWN_STATUSES]

    @property
    def missing_count(self) -> int:
        return len(self.missing_tokens)

    @property
    def is_complete(self) -> bool:
        return self.missing_count == 0

    @property
    def logits_recovered(self) -> int:
        """Recovered entries, not counting a reference token pinned to zero."""
        count = int(self.known_mask.sum())
        if self.normalization == Normalization.REFERENCE_TOKEN_ZERO:
            count -= 1
        return max(count, 0)

    @classmethod
    def empty(
        cls, vocab_size: int, normalization: Normalization, reference_token: Optional[int] = None
    ) -> "RecoveredLogits":
        return cls(
            values=np.full(vocab_size, np.nan),
            normalization=normalization,
            status=[EntryStatus.MISSING] * vocab_size,
            reference_token=reference_token,
        )

    def set(self, token: int, value: float, status: EntryStatus = EntryStatus.EXACT) -> None:
        self.values[token] = value
        self.status[token] = status


@dataclass
class IntervalBounds:
    """Enclosures alpha_i <= z_i - z_0 <= beta_i, node 0 being the reference token."""

    alpha: np.ndarray
    beta: np.ndarray
    tokens: np.ndarray
    status: list[EntryStatus] = field(default_factory=list)
    queries: int = 0
    rounds: int = 0
    history: list[list[float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.status:
            self.status = [EntryStatus.INTERVAL] * len(self.alpha)

    @property
    def reference_token(self) -> int:
        return int(self.tokens[0])

    @property
    def widths(self) -> np.ndarray:
        return self.beta - self.alpha

    @property
    def midpoints(self) -> np.ndarray:
        return (self.alpha + self.beta) / 2.0

    @property
    def mean_width(self) -> float:
        finite = np.isfinite(self.widths)
        if len(self.widths) <= 1 or not finite[1:].any():
            return 0.0
        return float(self.widths[1:][finite[1:]].mean())

    def contains(self, gaps: np.ndarray, tolerance: float = 0.0) -> np.ndarray:
        """Elementwise test that true gaps z_i - z_0 lie inside the bounds."""
        return (gaps >= self.alpha - tolerance) & (gaps <= self.beta + tolerance)

    def to_recovered(self, vocab_size: int) -> RecoveredLogits:
        """Midpoint estimates as a reference-token-normalized logit vector."""
        recovered = RecoveredLogits.empty(
            vocab_size, Normalization.REFERENCE_TOKEN_ZERO, reference_token=self.reference_token
        )
        mids = self.midpoints
        for node, token in enumerate(self.tokens):
            status = self.status[node]
            if status in UNKNOWN_STATUSES or not np.isfinite(mids[node]):
                recovered.status[int(token)] = status
                continue
            recovered.set(int(token), float(mids[node]), status)
        recovered.set(self.reference_token, 0.0, EntryStatus.EXACT)
        recovered.queries = self.queries
        return recovered
