"""Query session interface shared by in-process, remote and replayed surfaces."""

from abc import ABC, abstractmethod
from typing import Optional, Sequence

import numpy as np

from src.models.oracle import ApiConfig, LogitBias, TopKResponse
from src.models.victim import Precision
from src.oracle.ledger import CostLedger


class QuerySession(ABC):
    """Abstract base class for query surfaces.

    Attacks only ever talk to a QuerySession, so every attack runs unchanged
    in-process, over HTTP, or against a recorded transcript.
    """

    session_name: str = "base"

    @property
    @abstractmethod
    def config(self) -> ApiConfig:
        """Limits and mode of this surface."""

    @property
    @abstractmethod
    def vocab_size(self) -> int:
        """Number of tokens the surface scores."""

    @property
    @abstractmethod
    def ledger(self) -> CostLedger:
        """Cost ledger charged by every query."""

    @property
    def precision(self) -> Precision:
        """Precision of emitted logits and logprobs."""
        return Precision.FP64

    @abstractmethod
    async def query_all_logits(self, prompt: Sequence[int]) -> np.ndarray:
        """Full logit vector (AllLogits mode)."""

    @abstractmethod
    async def query_topk(
        self, prompt: Sequence[int], bias: Optional[LogitBias] = None
    ) -> TopKResponse:
        """Top-K logprobs under a logit bias."""

    @abstractmethod
    async def query_argmax(self, prompt: Sequence[int], bias: Optional[LogitBias] = None) -> int:
        """Index of the largest post-bias logit."""

    @abstractmethod
    async def query_generation_logprobs(
        self, prompt: Sequence[int], bias: Optional[LogitBias], m: int
    ) -> list[TopKResponse]:
        """Greedy m-token generation with the top-K logprobs at each position."""

    async def close(self) -> None:
        """Release resources held by the session."""

    async def __aenter__(self) -> "QuerySession":
        return self

    async def __aexit__(self, *exc: object) -> None:
        await self.close()
