"""Logit recovery from biased logprobs under the unit-normalizer convention.

With sum(exp(z)) = 1, biasing a set S of tokens by B and reading their
logprobs a_j gives

    z_j = a_j - B - log(1 - (1 - exp(-B)) * sum_{t in S} exp(a_t))

which is the Sherman-Morrison inverse of the rank-one softmax update. With a
single biased token this reduces to the single-logprob formula. When B is
large the bracket cancels catastrophically, so a batch whose bracket falls
under the guard threshold is re-queried with a smaller bias.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from src.models.oracle import ApiMode, LogitBias
from src.models.recovery import EntryStatus, Normalization, RecoveredLogits
from src.oracle.base import QuerySession
from src.oracle.errors import CapabilityError, StealerError

MAX_CONDITION = 1e12


class UnconstrainedTokenError(StealerError):
    """A token's logit is not pinned down by any observation."""

    def __init__(self, tokens: Sequence[int]):
        self.tokens = list(tokens)
        preview = ", ".join(str(t) for t in self.tokens[:10])
        super().__init__(f"{len(self.tokens)} tokens never observed: {preview}")


class IllConditionedSystemError(StealerError):
    """The least-squares system is numerically singular."""

    def __init__(self, condition: float, message: str = ""):
        self.condition = condition
        super().__init__(message or f"system condition number {condition:.3e} too large")


@dataclass
class KLogprobConfig:
    """Bias and cancellation-guard settings for the closed-form attacks."""

    bias_magnitude: float = 10.0
    guard_threshold: float = 1e-6
    bias_step: float = 5.0
    max_retries: int = 3


def _require_logprobs(session: QuerySession) -> int:
    config = session.config
    if config.mode not in (ApiMode.TOPK_LOGPROBS, ApiMode.GENERATION_LOGPROBS):
        raise CapabilityError(f"needs biased logprobs, have {config.mode.value}")
    if not config.allow_logit_bias:
        raise CapabilityError("needs logit bias")
    return config.k


def closed_form_logits(logprobs: np.ndarray, bias: float) -> tuple[np.ndarray, float]:
    """Unit-normalized logits of a biased batch and the guard bracket."""
    lse = float(logsumexp(logprobs))
    inner = -np.expm1(lse) + np.exp(-bias) * np.exp(lse)
    if inner <= 0:
        return np.full(len(logprobs), np.nan), float(inner)
    return logprobs - bias - np.log(inner), float(inner)


async def _recover_batched(
    session: QuerySession,
    prompt: Sequence[int],
    batch_size: int,
    config: KLogprobConfig,
    require_top: bool,
) -> RecoveredLogits:
    l = session.vocab_size
    start = session.ledger.queries
    recovered = RecoveredLogits.empty(l, Normalization.UNIT_NORMALIZER)

    for first in range(0, l, batch_size):
        batch = list(range(first, min(first + batch_size, l)))
        bias = config.bias_magnitude
        for attempt in range(config.max_retries + 1):
            if attempt > 0:
                recovered.retries += 1
            response = await session.query_topk(prompt, LogitBias.uniform(batch, bias))
            if require_top and response.top_token != batch[0]:
                break
            observed = [response.logprob(t) for t in batch]
            if any(lp is None for lp in observed):
                break
            values, inner = closed_form_logits(np.array(observed, dtype=np.float64), bias)
            if inner >= config.guard_threshold:
                for token, value in zip(batch, values):
                    recovered.set(token, float(value))
                break
            bias -= config.bias_step
            if bias <= 0:
                break

    recovered.queries = session.ledger.queries - start
    return recovered


async def recover_single_logprob(
    session: QuerySession,
    prompt: Sequence[int],
    bias_magnitude: Optional[float] = None,
    config: Optional[KLogprobConfig] = None,
) -> RecoveredLogits:
    """One query per token: bias token i until it ranks first, then invert."""
    _require_logprobs(session)
    config = config or KLogprobConfig()
    if bias_magnitude is not None:
        config = replace(config, bias_magnitude=bias_magnitude)
    return await _recover_batched(session, prompt, 1, config, require_top=True)


async def recover_k_logprob(
    session: QuerySession,
    prompt: Sequence[int],
    bias_magnitude: Optional[float] = None,
    config: Optional[KLogprobConfig] = None,
) -> RecoveredLogits:
    """K logits per query by biasing a batch of K tokens into the top-K."""
    k = _require_logprobs(session)
    config = config or KLogprobConfig()
    if bias_magnitude is not None:
        config = replace(config, bias_magnitude=bias_magnitude)
    return await _recover_batched(session, prompt, k, config, require_top=False)


# ---------------------------------------------------------------------------
# General least squares


@dataclass(frozen=True)
class LogprobObservation:
    """The logprob of one token under one bias vector."""

    bias: LogitBias
    token: int
    logprob: float


async def collect_logprob_observations(
    session: QuerySession,
    prompt: Sequence[int],
    bias_magnitudes: Iterable[float] = (10.0,),
    tokens: Optional[Sequence[int]] = None,
    include_unbiased: bool = False,
) -> list[LogprobObservation]:
    """Bias each token in turn and record every logprob the response carries.

    With `include_unbiased` the other tokens of each top-K response are kept
    too, which overdetermines the system without extra queries.
    """
    _require_logprobs(session)
    targets = list(range(session.vocab_size)) if tokens is None else list(tokens)
    observations: list[LogprobObservation] = []
    for magnitude in bias_magnitudes:
        for token in targets:
            bias = LogitBias.uniform([token], magnitude)
            response = await session.query_topk(prompt, bias)
            for t, lp in response.items:
                if t == token or include_unbiased:
                    observations.append(LogprobObservation(bias=bias, token=t, logprob=lp))
    return observations


def recover_least_squares(
    observations: Sequence[LogprobObservation],
    vocab_size: int,
    pin_token: int = 0,
    max_condition: float = MAX_CONDITION,
) -> RecoveredLogits:
    """Solve the linear system in exp(z) implied by arbitrary biased logprobs.

    Each observation contributes the row exp(b_j) * (1 - [j = i] exp(-a)),
    whose product with exp(z) is zero. Pinning exp(z_pin) = 1 fixes the scale.
    """
    observed = {o.token for o in observations}
    unconstrained = [t for t in range(vocab_size) if t != pin_token and t not in observed]
    if unconstrained:
        raise UnconstrainedTokenError(unconstrained)
    if len(observations) < vocab_size - 1:
        raise IllConditionedSystemError(
            np.inf, f"need at least {vocab_size - 1} observations, got {len(observations)}"
        )

    rows = np.empty((len(observations) + 1, vocab_size))
    for r, obs in enumerate(observations):
        row = np.exp(obs.bias.dense(vocab_size))
        row[obs.token] *= -np.expm1(-obs.logprob)
        rows[r] = row / np.abs(row).max()
    rows[-1] = 0.0
    rows[-1, pin_token] = 1.0
    rhs = np.zeros(len(rows))
    rhs[-1] = 1.0

    condition = float(np.linalg.cond(rows))
    if not np.isfinite(condition) or condition > max_condition:
        raise IllConditionedSystemError(condition)

    solution, *_ = scipy.linalg.lstsq(rows, rhs)
    if np.any(solution <= 0):
        bad = int(np.sum(solution <= 0))
        raise IllConditionedSystemError(
            condition, f"{bad} non-positive entries in exp(z); observations are inconsistent"
        )

    recovered = RecoveredLogits.empty(
        vocab_size, Normalization.REFERENCE_TOKEN_ZERO, reference_token=pin_token
    )
    recovered.values = np.log(solution)
    recovered.values[pin_token] = 0.0
    recovered.status = [EntryStatus.EXACT] * vocab_size
    return recovered
