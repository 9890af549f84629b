"""Hidden-dimension extraction from the numerical rank of a query matrix."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from src.extract.collect import Recoverer, collect_query_matrix
from src.models.extraction import QueryMatrix, SpectrumReport
from src.oracle.base import QuerySession
from src.oracle.errors import StealerError


class NeedMoreQueriesError(StealerError):
    """The spectrum has no interior cliff; query more prompts."""

    def __init__(self, message: str, report: Optional[SpectrumReport] = None):
        super().__init__(message)
        self.report = report


def spectrum(matrix: np.ndarray) -> SpectrumReport:
    """Singular values and log-gaps; zero values are floored before the log."""
    values = scipy.linalg.svdvals(np.asarray(matrix, dtype=np.float64))
    floored = np.maximum(values, np.finfo(np.float64).tiny)
    logs = np.log(floored)
    log_gaps = logs[:-1] - logs[1:]
    gap_index = int(np.argmax(log_gaps)) + 1 if len(log_gaps) else len(values)
    return SpectrumReport(singular_values=values, log_gaps=log_gaps, gap_index=gap_index)


def extract_hidden_dim(query_matrix: QueryMatrix) -> tuple[int, SpectrumReport]:
    """Stolen hidden dimension: the index of the largest singular-value gap.

    The gap may be any size. Whether n was large enough is for the caller to
    judge; steal_hidden_dim wants the gap below n / 2.
    """
    if query_matrix.n < 2:
        raise NeedMoreQueriesError("a single logit vector has no spectral gap")
    report = spectrum(query_matrix.matrix)
    if report.gap_index >= len(report.singular_values):
        raise NeedMoreQueriesError(
            f"{len(report.singular_values)} singular value(s) from {query_matrix.n} queries "
            "leave no interior gap",
            report,
        )
    return report.gap_index, report


async def steal_hidden_dim(
    session: QuerySession,
    expected: int,
    token_subset: Optional[Sequence[int]] = None,
    seed: int = 0,
    recoverer: Optional[Recoverer] = None,
    max_queries: Optional[int] = None,
) -> tuple[int, SpectrumReport, QueryMatrix]:
    """Double the prompt count from 2 * expected until the gap sits below n / 2.

    Earlier prompts are reused, so the total cost is the final n.
    """
    n = max(2 * expected, 2)
    matrix = await collect_query_matrix(session, n, token_subset, seed=seed, recoverer=recoverer)
    while True:
        try:
            dim, report = extract_hidden_dim(matrix)
            if dim < matrix.n / 2:
                return dim, report, matrix
        except NeedMoreQueriesError:
            pass
        if max_queries is not None and 2 * n > max_queries:
            raise NeedMoreQueriesError(f"no stable dimension within {max_queries} queries")
        more = await collect_query_matrix(
            session, n, token_subset, seed=seed, recoverer=recoverer, start=n
        )
        shared = np.intersect1d(matrix.columns, more.columns)
        matrix = matrix.restrict(shared).extend(more.restrict(shared))
        n *= 2
