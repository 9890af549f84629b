"""In-process query session wrapping a Victim."""

from collections import defaultdict
from typing import Optional, Sequence

import numpy as np

from src.models.oracle import (
    BINARY_BIAS_VALUES,
    ApiConfig,
    ApiMode,
    LogitBias,
    Prompt,
    TopKResponse,
)
from src.models.victim import Precision
from src.oracle.base import QuerySession
from src.oracle.errors import (
    ApiRejection,
    BiasLimitError,
    BiasLogprobConflictError,
    CapabilityError,
    InvalidRequestError,
    RateLimitError,
)
from src.oracle.ledger import CostLedger
from src.victim.model import TokenRangeError, Victim
from src.victim.numerics import log_softmax, round_to_precision

OPERATION_MODES: dict[str, tuple[ApiMode, ...]] = {
    "all_logits": (ApiMode.ALL_LOGITS,),
    "topk": (ApiMode.TOPK_LOGPROBS, ApiMode.TOP1_BINARY_BIAS, ApiMode.GENERATION_LOGPROBS),
    "argmax": (ApiMode.ARGMAX_ONLY, ApiMode.TOP1_BINARY_BIAS),
    "generation": (ApiMode.GENERATION_LOGPROBS,),
}


class LocalSession(QuerySession):
    """A metered API session served directly from a Victim."""

    session_name = "local"

    def __init__(self, victim: Victim, config: Optional[ApiConfig] = None):
        self.victim = victim
        self._config = config or ApiConfig()
        self._ledger = CostLedger(self._config.overhead_tokens)
        self._bias_queries: dict[Prompt, int] = defaultdict(int)
        self._blocked = np.array(sorted(set(self._config.blocked_tokens)), dtype=np.int64)

    @property
    def config(self) -> ApiConfig:
        return self._config

    @property
    def vocab_size(self) -> int:
        return self.victim.vocab_size

    @property
    def ledger(self) -> CostLedger:
        return self._ledger

    @property
    def precision(self) -> Precision:
        return self._config.logprob_precision or self.victim.spec.precision

    # ------------------------------------------------------------------ admission

    def _reject(self, prompt: Sequence[int], error: ApiRejection) -> ApiRejection:
        if self._config.charge_rejected:
            self._ledger.charge(len(prompt), 0)
        return error

    def _admit(
        self,
        operation: str,
        prompt: Sequence[int],
        bias: Optional[LogitBias],
        wants_logprobs: bool,
    ) -> Prompt:
        """Validate a request against the surface limits; rejected requests are charged."""
        config = self._config
        try:
            tokens = self.victim.check_prompt(prompt)
        except TokenRangeError as e:
            raise self._reject(prompt, InvalidRequestError(str(e)))

        if config.mode not in OPERATION_MODES[operation]:
            raise self._reject(
                tokens,
                CapabilityError(f"{operation} queries are not offered in {config.mode.value} mode"),
            )

        biased = bias is not None and not bias.is_empty
        if bias is not None and len(bias) > 0:
            if biased and not config.allow_logit_bias:
                raise self._reject(tokens, CapabilityError("logit bias is not supported"))
            problem = bias.violation(config.bias_bound, config.bias_max_entries, self.vocab_size)
            if problem is not None:
                raise self._reject(tokens, BiasLimitError(problem))
            if config.mode == ApiMode.TOP1_BINARY_BIAS and any(
                v not in BINARY_BIAS_VALUES for v in bias.entries.values()
            ):
                raise self._reject(tokens, BiasLimitError("bias values restricted to {-1, 0}"))

        if biased and wants_logprobs and config.bias_xor_logprobs:
            raise self._reject(
                tokens, BiasLogprobConflictError("logit bias and logprobs cannot be combined")
            )

        if biased and config.max_bias_queries_per_prompt is not None:
            if self._bias_queries[tokens] >= config.max_bias_queries_per_prompt:
                raise self._reject(
                    tokens,
                    RateLimitError(
                        f"more than {config.max_bias_queries_per_prompt} biased queries "
                        "for this prompt"
                    ),
                )
            self._bias_queries[tokens] += 1
        return tokens

    # ------------------------------------------------------------------ evaluation

    def _biased_logits(self, prompt: Prompt, bias: Optional[LogitBias]) -> np.ndarray:
        z = self.victim.logits(prompt)
        if bias is not None and len(bias) > 0:
            z = z + bias.dense(self.vocab_size)
        if len(self._blocked):
            z[self._blocked] = -np.inf
        return z

    def _topk(self, z: np.ndarray, generated: Optional[int] = None) -> TopKResponse:
        k = min(self._config.k, self.vocab_size)
        logprobs = round_to_precision(log_softmax(z), self.precision)
        order = np.lexsort((np.arange(len(z)), -z))[:k]
        return TopKResponse(
            items=[(int(t), float(logprobs[t])) for t in order], generated=generated
        )

    # ------------------------------------------------------------------ queries

    async def query_all_logits(self, prompt: Sequence[int]) -> np.ndarray:
        tokens = self._admit("all_logits", prompt, None, wants_logprobs=False)
        z = round_to_precision(self._biased_logits(tokens, None), self.precision)
        self._ledger.charge(len(tokens), 1)
        return z

    async def query_topk(
        self, prompt: Sequence[int], bias: Optional[LogitBias] = None
    ) -> TopKResponse:
        tokens = self._admit("topk", prompt, bias, wants_logprobs=True)
        z = self._biased_logits(tokens, bias)
        response = self._topk(z, generated=int(np.argmax(z)))
        self._ledger.charge(len(tokens), 1)
        return response

    async def query_argmax(self, prompt: Sequence[int], bias: Optional[LogitBias] = None) -> int:
        tokens = self._admit("argmax", prompt, bias, wants_logprobs=False)
        z = self._biased_logits(tokens, bias)
        self._ledger.charge(len(tokens), 1)
        return int(np.argmax(z))

    async def query_generation_logprobs(
        self, prompt: Sequence[int], bias: Optional[LogitBias], m: int
    ) -> list[TopKResponse]:
        tokens = self._admit("generation", prompt, bias, wants_logprobs=True)
        if m < 1:
            raise self._reject(tokens, InvalidRequestError("m must be at least 1"))
        context = list(tokens)
        responses = []
        for _ in range(m):
            z = self._biased_logits(tuple(context), bias)
            winner = int(np.argmax(z))
            responses.append(self._topk(z, generated=winner))
            context.append(winner)
        self._ledger.charge(len(tokens), m)
        return responses
