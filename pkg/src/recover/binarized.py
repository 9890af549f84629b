"""Logit recovery from a top-1 logprob with biases restricted to {-1, 0}."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from src.models.oracle import ApiMode, LogitBias
from src.models.recovery import EntryStatus, Normalization, RecoveredLogits
from src.oracle.base import QuerySession
from src.oracle.errors import CapabilityError

PROBABILITY_FLOOR = 1e-12


def binarized_probability(top_logprob: float, biased_top_logprob: float) -> float:
    """Probability of a token from how much a -1 bias on it lifts the top logprob.

    Demoting token t by one nat rescales the normalizer by 1 - p_t(1 - 1/e),
    so p_t = (exp(y - y') - 1) / (1/e - 1).
    """
    return float(np.expm1(top_logprob - biased_top_logprob) / np.expm1(-1.0))


async def recover_binarized(
    session: QuerySession,
    prompt: Sequence[int],
    floor: float = PROBABILITY_FLOOR,
) -> RecoveredLogits:
    """l queries: one baseline plus one -1 bias per non-top token."""
    if session.config.mode != ApiMode.TOP1_BINARY_BIAS:
        raise CapabilityError(f"needs top1_binary_bias, have {session.config.mode.value}")
    l = session.vocab_size
    start = session.ledger.queries
    recovered = RecoveredLogits.empty(l, Normalization.UNIT_NORMALIZER)

    baseline = await session.query_topk(prompt)
    top, top_lp = baseline.items[0]
    recovered.set(top, top_lp)

    for token in range(l):
        if token == top:
            continue
        response = await session.query_topk(prompt, LogitBias.uniform([token], -1.0))
        biased_lp = response.logprob(top)
        if biased_lp is None:
            continue
        p = binarized_probability(top_lp, biased_lp)
        if p <= floor:
            recovered.set(token, math.log(floor), EntryStatus.LOW_CONFIDENCE)
        else:
            recovered.set(token, math.log(p))

    recovered.queries = session.ledger.queries - start
    return recovered
