"""Query API configuration and response models."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.models.victim import Precision

Prompt = tuple[int, ...]


class ApiMode(str, Enum):
    """Query surfaces an attacker can face."""

    ALL_LOGITS = "all_logits"
    TOPK_LOGPROBS = "topk_logprobs"
    TOP1_BINARY_BIAS = "top1_binary_bias"
    ARGMAX_ONLY = "argmax_only"
    GENERATION_LOGPROBS = "generation_logprobs"


BINARY_BIAS_VALUES = (-1.0, 0.0)


class ApiConfig(BaseModel):
    """Limits and toggles enforced by a query session."""

    mode: ApiMode = ApiMode.TOPK_LOGPROBS
    k: int = Field(5, ge=1, le=64, description="Logprobs returned per position")
    bias_bound: float = Field(100.0, gt=0, description="Logit bias magnitude bound B")
    bias_max_entries: int = Field(300, ge=1, description="Maximum biased tokens N")
    overhead_tokens: int = Field(0, ge=0, description="Billed overhead tokens per query")
    charge_rejected: bool = True

    # Defenses
    bias_xor_logprobs: bool = False
    allow_logit_bias: bool = True
    blocked_tokens: list[int] = Field(default_factory=list)
    max_bias_queries_per_prompt: Optional[int] = Field(None, ge=0)

    logprob_precision: Optional[Precision] = Field(
        None, description="Emission precision; defaults to the victim's precision"
    )

    @model_validator(mode="after")
    def _check_mode(self) -> "ApiConfig":
        if self.mode == ApiMode.TOP1_BINARY_BIAS and self.k != 1:
            raise ValueError("top1_binary_bias mode requires k=1")
        return self

    @property
    def returns_logprobs(self) -> bool:
        return self.mode in (
            ApiMode.TOPK_LOGPROBS,
            ApiMode.TOP1_BINARY_BIAS,
            ApiMode.GENERATION_LOGPROBS,
        )

    def descriptor(self) -> dict:
        """Public description of the surface, as served by /healthz."""
        return {
            "mode": self.mode.value,
            "k": self.k,
            "bias_bound": self.bias_bound,
            "bias_max_entries": self.bias_max_entries,
            "overhead_tokens": self.overhead_tokens,
            "charge_rejected": self.charge_rejected,
            "bias_xor_logprobs": self.bias_xor_logprobs,
            "allow_logit_bias": self.allow_logit_bias,
            "max_bias_queries_per_prompt": self.max_bias_queries_per_prompt,
        }


class LogitBias(BaseModel):
    """Sparse token -> additive logit offset."""

    entries: dict[int, float] = Field(default_factory=dict)

    @classmethod
    def uniform(cls, tokens: Sequence[int], value: float) -> "LogitBias":
        return cls(entries={int(t): float(value) for t in tokens})

    @classmethod
    def from_wire(cls, entries: dict[str, float]) -> "LogitBias":
        return cls(entries={int(k): float(v) for k, v in entries.items()})

    def to_wire(self) -> dict[str, float]:
        return {str(k): v for k, v in self.entries.items()}

    @property
    def is_empty(self) -> bool:
        return not any(v != 0.0 for v in self.entries.values())

    def __len__(self) -> int:
        return len(self.entries)

    def dense(self, vocab_size: int) -> np.ndarray:
        out = np.zeros(vocab_size)
        if self.entries:
            tokens = np.fromiter(self.entries.keys(), dtype=np.int64, count=len(self.entries))
            values = np.fromiter(self.entries.values(), dtype=float, count=len(self.entries))
            out[tokens] = values
        return out

    def violation(self, bound: float, max_entries: int, vocab_size: int) -> Optional[str]:
        """Describe the first limit this bias breaks, or None."""
        if len(self.entries) > max_entries:
            return f"{len(self.entries)} biased tokens exceeds the cap of {max_entries}"
        for token, value in self.entries.items():
            if token < 0 or token >= vocab_size:
                return f"biased token {token} outside vocabulary of {vocab_size}"
            if not math.isfinite(value) or abs(value) > bound:
                return f"bias {value} on token {token} outside [-{bound}, {bound}]"
        return None


@dataclass
class TopKResponse:
    """Top-K (token, logprob) pairs sorted by descending post-bias logit."""

    items: list[tuple[int, float]]
    generated: Optional[int] = None

    @property
    def tokens(self) -> list[int]:
        return [t for t, _ in self.items]

    @property
    def top_token(self) -> int:
        return self.items[0][0]

    def logprob(self, token: int) -> Optional[float]:
        for t, lp in self.items:
            if t == token:
                return lp
        return None

    def as_dict(self) -> dict[int, float]:
        return dict(self.items)

    @classmethod
    def from_mapping(
        cls, mapping: dict[int, float], generated: Optional[int] = None
    ) -> "TopKResponse":
        # Mapping order is the server's ranking order.
        return cls(items=[(int(t), float(lp)) for t, lp in mapping.items()], generated=generated)


@dataclass
class LedgerSnapshot:
    """Point-in-time copy of a cost ledger."""

    queries: int = 0
    tokens_in: int = 0
    tokens_out: int = 0
    overhead_tokens: int = 0

    @property
    def tokens_total(self) -> int:
        return self.tokens_in + self.tokens_out + self.overhead_tokens

    def minus(self, other: "LedgerSnapshot") -> "LedgerSnapshot":
        return LedgerSnapshot(
            queries=self.queries - other.queries,
            tokens_in=self.tokens_in - other.tokens_in,
            tokens_out=self.tokens_out - other.tokens_out,
            overhead_tokens=self.overhead_tokens - other.overhead_tokens,
        )
