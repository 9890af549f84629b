"""Query and token metering."""

import threading

from src.models.oracle import LedgerSnapshot


class CostLedger:
    """Monotone query/token counters for one session.

    Token cost of a query = prompt length + generated length + overhead.
    """

    def __init__(self, overhead_per_query: int = 0):
        if overhead_per_query < 0:
            raise ValueError("overhead_per_query must be non-negative")
        self.overhead_per_query = overhead_per_query
        self._lock = threading.Lock()
        self._state = LedgerSnapshot()

    def charge(self, prompt_tokens: int, generated_tokens: int, queries: int = 1) -> None:
        if prompt_tokens < 0 or generated_tokens < 0 or queries < 0:
            raise ValueError("ledger charges must be non-negative")
        with self._lock:
            self._state.queries += queries
            self._state.tokens_in += prompt_tokens
            self._state.tokens_out += generated_tokens
            self._state.overhead_tokens += queries * self.overhead_per_query

    def snapshot(self) -> LedgerSnapshot:
        with self._lock:
            s = self._state
            return LedgerSnapshot(s.queries, s.tokens_in, s.tokens_out, s.overhead_tokens)

    @property
    def queries(self) -> int:
        return self.snapshot().queries

    @property
    def tokens_total(self) -> int:
        return self.snapshot().tokens_total

    def __repr__(self) -> str:
        s = self.snapshot()
        return (
            f"CostLedger(queries={s.queries}, tokens_in={s.tokens_in}, "
            f"tokens_out={s.tokens_out}, overhead={s.overhead_tokens})"
        )
