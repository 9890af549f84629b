"""Record every request/response pair of a session, and replay recordings."""

from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field

from src.models.oracle import ApiConfig, LogitBias, TopKResponse
from src.models.victim import Precision
from src.oracle.base import QuerySession
from src.oracle.errors import ApiRejection, TranscriptMismatchError, rejection_from_code
from src.oracle.ledger import CostLedger


class TranscriptRecord(BaseModel):
    """One query as seen on the wire."""

    op: str
    prompt: list[int]
    logit_bias: dict[str, float] = Field(default_factory=dict)
    m: Optional[int] = None
    response: Any = None
    error: Optional[dict[str, str]] = None
    ledger_queries: int = 0


def _encode_topk(response: TopKResponse) -> dict[str, Any]:
    return {"items": [[t, lp] for t, lp in response.items], "generated": response.generated}


def _decode_topk(payload: dict[str, Any]) -> TopKResponse:
    return TopKResponse(
        items=[(int(t), float(lp)) for t, lp in payload["items"]],
        generated=payload.get("generated"),
    )


def _encode_logits(values: np.ndarray) -> list[Optional[float]]:
    return [float(v) if np.isfinite(v) else None for v in values]


def _decode_logits(values: list[Optional[float]]) -> np.ndarray:
    return np.array([-np.inf if v is None else v for v in values], dtype=np.float64)


class TranscriptRecorder(QuerySession):
    """Pass-through session that logs each query for audit and replay."""

    session_name = "recorder"

    def __init__(self, inner: QuerySession):
        self.inner = inner
        self.records: list[TranscriptRecord] = []

    @property
    def config(self) -> ApiConfig:
        return self.inner.config

    @property
    def vocab_size(self) -> int:
        return self.inner.vocab_size

    @property
    def ledger(self) -> CostLedger:
        return self.inner.ledger

    @property
    def precision(self) -> Precision:
        return self.inner.precision

    async def _record(self, record: TranscriptRecord, call: Any, encode: Any) -> Any:
        try:
            result = await call
        except ApiRejection as e:
            record.error = {"code": e.code, "message": e.message}
            record.ledger_queries = self.inner.ledger.queries
            self.records.append(record)
            raise
        record.response = encode(result)
        record.ledger_queries = self.inner.ledger.queries
        self.records.append(record)
        return result

    async def query_all_logits(self, prompt: Sequence[int]) -> np.ndarray:
        record = TranscriptRecord(op="all_logits", prompt=list(prompt))
        return await self._record(record, self.inner.query_all_logits(prompt), _encode_logits)

    async def query_topk(
        self, prompt: Sequence[int], bias: Optional[LogitBias] = None
    ) -> TopKResponse:
        record = TranscriptRecord(
            op="topk", prompt=list(prompt), logit_bias=bias.to_wire() if bias else {}
        )
        return await self._record(record, self.inner.query_topk(prompt, bias), _encode_topk)

    async def query_argmax(self, prompt: Sequence[int], bias: Optional[LogitBias] = None) -> int:
        record = TranscriptRecord(
            op="argmax", prompt=list(prompt), logit_bias=bias.to_wire() if bias else {}
        )
        return await self._record(record, self.inner.query_argmax(prompt, bias), int)

    async def query_generation_logprobs(
        self, prompt: Sequence[int], bias: Optional[LogitBias], m: int
    ) -> list[TopKResponse]:
        record = TranscriptRecord(
            op="generation", prompt=list(prompt), logit_bias=bias.to_wire() if bias else {}, m=m
        )
        return await self._record(
            record,
            self.inner.query_generation_logprobs(prompt, bias, m),
            lambda rs: [_encode_topk(r) for r in rs],
        )

    async def close(self) -> None:
        await self.inner.close()

    def write_jsonl(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            for record in self.records:
                f.write(record.model_dump_json() + "\n")
        return path


def read_transcript(path: Union[str, Path]) -> list[TranscriptRecord]:
    with open(path) as f:
        return [TranscriptRecord.model_validate_json(line) for line in f if line.strip()]


class ReplaySession(QuerySession):
    """Serves a recorded transcript back in order; any divergent request fails."""

    session_name = "replay"

    def __init__(
        self,
        records: list[TranscriptRecord],
        vocab_size: int,
        config: ApiConfig,
        precision: Precision = Precision.FP64,
    ):
        self.records = list(records)
        self._position = 0
        self._vocab_size = vocab_size
        self._config = config
        self._precision = precision
        self._ledger = CostLedger(config.overhead_tokens)

    @property
    def config(self) -> ApiConfig:
        return self._config

    @property
    def vocab_size(self) -> int:
        return self._vocab_size

    @property
    def ledger(self) -> CostLedger:
        return self._ledger

    @property
    def precision(self) -> Precision:
        return self._precision

    @property
    def exhausted(self) -> bool:
        return self._position >= len(self.records)

    def _next(
        self, op: str, prompt: Sequence[int], bias: Optional[LogitBias], m: Optional[int] = None
    ) -> TranscriptRecord:
        if self.exhausted:
            raise TranscriptMismatchError(f"transcript exhausted at {op} query")
        record = self.records[self._position]
        wire_bias = bias.to_wire() if bias else {}
        if (
            record.op != op
            or record.prompt != list(prompt)
            or record.logit_bias != wire_bias
            or record.m != m
        ):
            raise TranscriptMismatchError(
                f"query {self._position} diverges from the recording ({record.op} expected)"
            )
        self._position += 1
        if record.error is not None:
            if self._config.charge_rejected:
                self._ledger.charge(len(prompt), 0)
            raise rejection_from_code(record.error["code"], record.error.get("message", ""))
        return record

    async def query_all_logits(self, prompt: Sequence[int]) -> np.ndarray:
        record = self._next("all_logits", prompt, None)
        self._ledger.charge(len(prompt), 1)
        return _decode_logits(record.response)

    async def query_topk(
        self, prompt: Sequence[int], bias: Optional[LogitBias] = None
    ) -> TopKResponse:
        record = self._next("topk", prompt, bias)
        self._ledger.charge(len(prompt), 1)
        return _decode_topk(record.response)

    async def query_argmax(self, prompt: Sequence[int], bias: Optional[LogitBias] = None) -> int:
        record = self._next("argmax", prompt, bias)
        self._ledger.charge(len(prompt), 1)
        return int(record.response)

    async def query_generation_logprobs(
        self, prompt: Sequence[int], bias: Optional[LogitBias], m: int
    ) -> list[TopKResponse]:
        record = self._next("generation", prompt, bias, m)
        self._ledger.charge(len(prompt), m)
        return [_decode_topk(r) for r in record.response]
