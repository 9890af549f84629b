"""Reference-token recovery through top-K logprobs with logit bias.

Biasing K-1 tokens by B pushes them into the top-K next to the unbiased top
token R. Because every logprob in one response shares the softmax normalizer,
y_i - y_R - B = z_i - z_R, so each query reveals K-1 logits relative to R.
"""

from typing import Optional, Sequence

from src.models.oracle import ApiMode, LogitBias, TopKResponse
from src.models.recovery import Normalization, RecoveredLogits
from src.oracle.base import QuerySession
from src.oracle.errors import CapabilityError

MULTI_TOKEN_SEPARATION = 10.0


def _batches(tokens: Sequence[int], size: int) -> list[list[int]]:
    return [list(tokens[i : i + size]) for i in range(0, len(tokens), size)]


def _require_k(session: QuerySession, modes: tuple[ApiMode, ...]) -> int:
    config = session.config
    if config.mode not in modes:
        raise CapabilityError(f"needs one of {[m.value for m in modes]}, have {config.mode.value}")
    if config.k < 2:
        raise CapabilityError("needs at least two logprobs per response")
    return config.k


async def recover_reference_token(
    session: QuerySession,
    prompt: Sequence[int],
    bias_magnitude: Optional[float] = None,
) -> RecoveredLogits:
    """Recover z - z_R for every token at ceil((l-1)/(K-1)) queries."""
    k = _require_k(session, (ApiMode.TOPK_LOGPROBS,))
    bias = session.config.bias_bound if bias_magnitude is None else bias_magnitude
    l = session.vocab_size
    batch_size = k - 1
    start = session.ledger.queries

    # The first response fixes R: either the top unbiased token or, if one of
    # the first batch outranks it once the bias is removed, that batch token.
    first = list(range(min(batch_size, l)))
    response = await session.query_topk(prompt, LogitBias.uniform(first, bias))
    relative = _relative_to_unbiased(response, set(first), bias)
    reference = max(relative, key=lambda t: (relative[t], -t))
    offset = relative[reference]

    recovered = RecoveredLogits.empty(l, Normalization.REFERENCE_TOKEN_ZERO, reference)
    for token, value in relative.items():
        recovered.set(token, value - offset)
    recovered.set(reference, 0.0)

    known = set(relative) | set(first)
    remaining = [t for t in range(l) if t not in known]
    for batch in _batches(remaining, batch_size):
        response = await session.query_topk(prompt, LogitBias.uniform(batch, bias))
        reference_lp = response.logprob(reference)
        if reference_lp is None:
            continue
        for token in batch:
            lp = response.logprob(token)
            if lp is not None:
                recovered.set(token, lp - bias - reference_lp)

    recovered.queries = session.ledger.queries - start
    return recovered


def _relative_to_unbiased(
    response: TopKResponse, biased: set[int], bias: float
) -> dict[int, float]:
    """Logits in one response relative to its top unbiased token."""
    unbiased = [(t, lp) for t, lp in response.items if t not in biased]
    anchor_token, anchor_lp = unbiased[0]
    relative = {anchor_token: 0.0}
    for token, lp in response.items:
        if token in biased:
            relative[token] = lp - bias - anchor_lp
        elif token != anchor_token:
            relative[token] = lp - anchor_lp
    return relative


async def recover_multi_token(
    session: QuerySession,
    prompt: Sequence[int],
    m: int,
    bias_magnitude: Optional[float] = None,
    separation: float = MULTI_TOKEN_SEPARATION,
    dominant_token: int = 0,
) -> list[RecoveredLogits]:
    """Multi-token expansion: one generation query recovers K-1 logits at m positions.

    Bias B on a dominant token x and B - separation on K-1 others forces the
    model to emit x repeatedly, so position j exposes the logits of
    prompt + [x] * j relative to x.
    """
    k = _require_k(session, (ApiMode.GENERATION_LOGPROBS,))
    if m < 1:
        raise ValueError("m must be at least 1")
    bias = session.config.bias_bound if bias_magnitude is None else bias_magnitude
    secondary = bias - separation
    l = session.vocab_size
    x = dominant_token
    start = session.ledger.queries

    results = [RecoveredLogits.empty(l, Normalization.REFERENCE_TOKEN_ZERO, x) for _ in range(m)]
    for recovered in results:
        recovered.set(x, 0.0)

    others = [t for t in range(l) if t != x]
    for batch in _batches(others, k - 1):
        entries = {t: secondary for t in batch}
        entries[x] = bias
        responses = await session.query_generation_logprobs(prompt, LogitBias(entries=entries), m)
        for position, response in enumerate(responses):
            x_lp = response.logprob(x)
            if x_lp is None:
                break
            for token in batch:
                lp = response.logprob(token)
                if lp is not None:
                    results[position].set(token, lp - x_lp + separation)
            if response.generated is not None and response.generated != x:
                # later positions no longer extend the prompt with x
                break

    queries = session.ledger.queries - start
    for recovered in results:
        recovered.queries = queries
    return results
