"""Logprob-free recovery: only the argmax token is observable.

Both attacks first find the unbiased argmax R and then enclose every gap
z_i - z_R inside [alpha_i, beta_i], starting from the prior [-B, 0].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from src.models.oracle import ApiMode, LogitBias
from src.models.recovery import EntryStatus, IntervalBounds
from src.oracle.base import QuerySession
from src.oracle.errors import CapabilityError
from src.recover.constraints import ConstraintGraph, shortest_path_bounds


def _require_argmax(session: QuerySession) -> None:
    mode = session.config.mode
    if mode != ApiMode.ARGMAX_ONLY:
        raise CapabilityError(f"needs argmax queries with real-valued bias, have {mode.value}")


def _node_order(reference: int, vocab_size: int, tokens: Optional[Sequence[int]]) -> list[int]:
    candidates = range(vocab_size) if tokens is None else tokens
    return [reference] + [int(t) for t in candidates if int(t) != reference]


async def recover_binary_search(
    session: QuerySession,
    prompt: Sequence[int],
    epsilon: float,
    bias_magnitude: Optional[float] = None,
    tokens: Optional[Sequence[int]] = None,
) -> IntervalBounds:
    """Bisect the bias on each token until its interval is at most epsilon wide.

    Costs ceil(log2(B / epsilon)) queries per token, plus one confirming
    query for a token that never won, which is unreachable when it loses
    even at bias +B.
    """
    _require_argmax(session)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    bound = session.config.bias_bound if bias_magnitude is None else bias_magnitude
    start = session.ledger.queries

    reference = await session.query_argmax(prompt)
    order = _node_order(reference, session.vocab_size, tokens)
    n = len(order)
    alpha = np.zeros(n)
    beta = np.zeros(n)
    status = [EntryStatus.EXACT] + [EntryStatus.INTERVAL] * (n - 1)

    for node in range(1, n):
        token = order[node]
        lo, hi = -bound, 0.0
        won = False
        while hi - lo > epsilon:
            mid = (lo + hi) / 2.0
            winner = await session.query_argmax(prompt, LogitBias.uniform([token], -mid))
            if winner == token:
                lo = mid
                won = True
            else:
                hi = mid
        if not won:
            winner = await session.query_argmax(prompt, LogitBias.uniform([token], bound))
            if winner != token:
                lo, hi = -math.inf, -bound
                status[node] = EntryStatus.UNREACHABLE
        alpha[node], beta[node] = lo, hi

    return IntervalBounds(
        alpha=alpha,
        beta=beta,
        tokens=np.array(order),
        status=status,
        queries=session.ledger.queries - start,
    )


# ---------------------------------------------------------------------------
# Multi-token hyperrectangle attack


class Centering(str, Enum):
    """Where inside the current box each round's bias points."""

    MIDPOINT = "midpoint"
    ONE_OF_N = "one_of_n"


@dataclass
class HyperrectangleConfig:
    """Round budget and batching for the hyperrectangle attack.

    `target_width` ends a batch early once its mean interval width reaches it.
    """

    rounds: int = 100
    centering: Centering = Centering.ONE_OF_N
    batch_size: Optional[int] = None
    bias_magnitude: Optional[float] = None
    target_width: Optional[float] = None
    track_history: bool = False


def one_of_n_coefficient(n: int) -> float:
    """c such that the reference wins with probability 1/(n+1) under a uniform prior."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return math.exp(-math.log(n + 1) / n)


def centering_biases(
    alpha: np.ndarray, beta: np.ndarray, centering: Centering, bound: float
) -> np.ndarray:
    """Per-node bias for one round, clipped to the API's [-B, B]."""
    if centering == Centering.MIDPOINT:
        biases = -(alpha + beta) / 2.0
    else:
        c = one_of_n_coefficient(max(len(alpha) - 1, 1))
        biases = -(1.0 - c) * alpha - c * beta
    return np.clip(biases, -bound, bound)


async def _attack_batch(
    session: QuerySession,
    prompt: Sequence[int],
    nodes: list[int],
    bound: float,
    config: HyperrectangleConfig,
    history: Optional[list[float]],
) -> tuple[IntervalBounds, int]:
    graph = ConstraintGraph(len(nodes), bias_bound=bound)
    bounds = shortest_path_bounds(graph, tokens=np.array(nodes))
    index = {token: node for node, token in enumerate(nodes)}
    rounds = 0
    for _ in range(config.rounds):
        if config.target_width is not None and bounds.mean_width <= config.target_width:
            break
        biases = centering_biases(bounds.alpha, bounds.beta, config.centering, bound)
        biases[0] = 0.0
        entries = {nodes[node]: float(biases[node]) for node in range(1, len(nodes))}
        winner = await session.query_argmax(prompt, LogitBias(entries=entries))
        rounds += 1
        if winner not in index:
            continue
        graph.observe(index[winner], biases)
        bounds = shortest_path_bounds(graph, warm_start=bounds)
        if history is not None:
            history.append(bounds.mean_width)
    return bounds, rounds


async def recover_hyperrectangle(
    session: QuerySession,
    prompt: Sequence[int],
    rounds: Optional[int] = None,
    centering: Optional[Centering] = None,
    config: Optional[HyperrectangleConfig] = None,
    tokens: Optional[Sequence[int]] = None,
) -> IntervalBounds:
    """Bias up to N tokens per query and keep the tightest box the argmaxes imply.

    Tokens are processed in batches of N (the API's entry cap); each batch
    gets its own constraint graph with the reference as node 0.
    """
    _require_argmax(session)
    config = config or HyperrectangleConfig()
    if rounds is not None:
        config = replace(config, rounds=rounds)
    if centering is not None:
        config = replace(config, centering=centering)
    bound = session.config.bias_bound if config.bias_magnitude is None else config.bias_magnitude
    batch_size = config.batch_size or session.config.bias_max_entries
    batch_size = min(batch_size, session.config.bias_max_entries)
    start = session.ledger.queries

    reference = await session.query_argmax(prompt)
    order = _node_order(reference, session.vocab_size, tokens)
    n = len(order)
    alpha = np.zeros(n)
    beta = np.zeros(n)
    history: Optional[list[float]] = [] if config.track_history else None
    total_rounds = 0

    for first in range(1, n, batch_size):
        members = order[first : first + batch_size]
        batch_bounds, used = await _attack_batch(
            session, prompt, [reference] + members, bound, config, history
        )
        alpha[first : first + len(members)] = batch_bounds.alpha[1:]
        beta[first : first + len(members)] = batch_bounds.beta[1:]
        total_rounds += used

    status = [EntryStatus.EXACT] + [EntryStatus.INTERVAL] * (n - 1)
    return IntervalBounds(
        alpha=alpha,
        beta=beta,
        tokens=np.array(order),
        status=status,
        queries=session.ledger.queries - start,
        rounds=total_rounds,
        history=[history] if history is not None else [],
    )
