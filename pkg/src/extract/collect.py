"""Query-matrix collection over any API surface."""

from __future__ import annotations

from typing import Awaitable, Callable, Optional, Sequence, Union

import numpy as np

from src.models.extraction import QueryMatrix
from src.models.oracle import ApiMode
from src.models.recovery import IntervalBounds, Normalization, RecoveredLogits
from src.oracle.base import QuerySession
from src.oracle.errors import CapabilityError
from src.victim.prompts import random_prompts

Recovery = Union[RecoveredLogits, IntervalBounds]
Recoverer = Callable[[QuerySession, Sequence[int]], Awaitable[Recovery]]


def _anchored(result: Recovery, vocab_size: int, anchor: int) -> np.ndarray:
    """Recovered row shifted so the anchor token reads zero.

    Both normalizations differ from the true logits by a per-prompt constant,
    so anchoring every row to one fixed token keeps the rows linear in the
    hidden state.
    """
    if isinstance(result, IntervalBounds):
        result = result.to_recovered(vocab_size)
    values = np.array(result.values, dtype=np.float64)
    values[~result.known_mask] = np.nan
    return values - values[anchor]


async def collect_query_matrix(
    session: QuerySession,
    n: int,
    token_subset: Optional[Sequence[int]] = None,
    seed: int = 0,
    recoverer: Optional[Recoverer] = None,
    start: int = 0,
) -> QueryMatrix:
    """Query n distinct random prompts and stack their logit vectors.

    Without a recoverer the session must serve full logits. With one, each
    row is whatever that recovery returns for the prompt, so the matrix can
    be built through top-K, binarized or argmax-only surfaces. `start` skips
    the first prompts of the seeded sequence so a matrix can be grown.
    Columns with a missing or blocked entry in any row are dropped.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if recoverer is None and session.config.mode != ApiMode.ALL_LOGITS:
        raise CapabilityError(
            f"full logits are not offered in {session.config.mode.value} mode; pass a recoverer"
        )
    l = session.vocab_size
    if token_subset is not None:
        columns = np.asarray(sorted(set(int(t) for t in token_subset)), dtype=np.int64)
        if len(columns) == 0 or columns[0] < 0 or columns[-1] >= l:
            raise ValueError(f"token subset must lie in [0, {l})")
    else:
        columns = np.arange(l)

    prompts = random_prompts(start + n, l, seed=seed)[start:]
    rows = []
    normalization: Optional[Normalization] = None
    for prompt in prompts:
        if recoverer is None:
            row = await session.query_all_logits(prompt)
        else:
            row = _anchored(await recoverer(session, prompt), l, int(columns[0]))
            normalization = Normalization.REFERENCE_TOKEN_ZERO
        rows.append(np.asarray(row, dtype=np.float64)[columns])

    matrix = QueryMatrix(
        matrix=np.vstack(rows),
        prompts=prompts,
        precision=session.precision,
        columns=columns,
        normalization=normalization,
    )
    return matrix.finite_columns()
