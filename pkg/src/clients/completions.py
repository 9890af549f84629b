"""
HTTP client for the completions surface.

RemoteSession implements QuerySession over POST /v1/completions, so every
attack runs unchanged against a server.

Usage:
    session = await RemoteSession.connect("http://127.0.0.1:8000")
    response = await session.query_topk([1, 2, 3], LogitBias.uniform([7], 100.0))
    await session.close()

Only transport failures are retried. An API rejection is final and is
charged exactly as the server billed it.
"""

import asyncio
import uuid
from typing import Any, Optional, Sequence

import httpx
import numpy as np
from pydantic import ValidationError

from api.models import CompletionRequest, CompletionResponse, HealthResponse
from api.sessions import SESSION_HEADER
from src.models.oracle import ApiConfig, LogitBias, TopKResponse
from src.models.victim import Precision
from src.oracle.base import QuerySession
from src.oracle.errors import MalformedResponseError, TransportError, rejection_from_code
from src.oracle.ledger import CostLedger

DEFAULT_TIMEOUT_S = 30.0
DEFAULT_RETRIES = 3
DEFAULT_BACKOFF_S = 0.1


def _topk_from_wire(mapping: dict[str, Optional[float]], generated: Optional[int]) -> TopKResponse:
    return TopKResponse.from_mapping(
        {int(t): (-np.inf if lp is None else lp) for t, lp in mapping.items()},
        generated=generated,
    )


async def _post(
    client: httpx.AsyncClient,
    payload: dict[str, Any],
    retries: int,
    backoff: float,
    ledger: Optional[CostLedger] = None,
) -> CompletionResponse:
    last_error: Optional[Exception] = None
    for attempt in range(retries + 1):
        try:
            response = await client.post("/v1/completions", json=payload)
            break
        except httpx.TransportError as e:
            last_error = e
            if attempt < retries:
                await asyncio.sleep(backoff * 2**attempt)
    else:
        raise TransportError(
            f"endpoint unreachable after {retries + 1} attempts: {last_error}"
        ) from last_error

    try:
        body = CompletionResponse.model_validate(response.json())
    except (ValueError, ValidationError) as e:
        raise MalformedResponseError(f"HTTP {response.status_code}: {e}") from e

    if ledger is not None and body.usage.queries + body.usage.prompt_tokens > 0:
        ledger.charge(
            body.usage.prompt_tokens, body.usage.completion_tokens, queries=body.usage.queries
        )
    if body.error is not None:
        raise rejection_from_code(body.error.code, body.error.message)
    if response.status_code != 200:
        raise MalformedResponseError(f"HTTP {response.status_code} without an error body")
    return body


async def remote_query(
    endpoint: str,
    request: CompletionRequest,
    transport: Optional[httpx.AsyncBaseTransport] = None,
    retries: int = DEFAULT_RETRIES,
) -> CompletionResponse:
    """Send one completion request and return the parsed response."""
    async with httpx.AsyncClient(
        base_url=endpoint, transport=transport, timeout=DEFAULT_TIMEOUT_S
    ) as client:
        return await _post(
            client, request.model_dump(exclude_none=True), retries, DEFAULT_BACKOFF_S
        )


class RemoteSession(QuerySession):
    """A QuerySession whose queries travel over HTTP."""

    session_name = "remote"

    def __init__(
        self,
        endpoint: str,
        health: HealthResponse,
        transport: Optional[httpx.AsyncBaseTransport] = None,
        retries: int = DEFAULT_RETRIES,
        backoff: float = DEFAULT_BACKOFF_S,
        session_token: Optional[str] = None,
    ):
        self.endpoint = endpoint
        self.health = health
        self.retries = retries
        self.backoff = backoff
        self._config = ApiConfig(**health.api)
        self._ledger = CostLedger(self._config.overhead_tokens)
        self._client = httpx.AsyncClient(
            base_url=endpoint,
            transport=transport,
            timeout=DEFAULT_TIMEOUT_S,
            headers={SESSION_HEADER: session_token or uuid.uuid4().hex},
        )

    @classmethod
    async def connect(
        cls,
        endpoint: str,
        transport: Optional[httpx.AsyncBaseTransport] = None,
        retries: int = DEFAULT_RETRIES,
        backoff: float = DEFAULT_BACKOFF_S,
    ) -> "RemoteSession":
        """Read the surface descriptor from /healthz and open a session."""
        async with httpx.AsyncClient(
            base_url=endpoint, transport=transport, timeout=DEFAULT_TIMEOUT_S
        ) as client:
            for attempt in range(retries + 1):
                try:
                    response = await client.get("/healthz")
                    break
                except httpx.TransportError as e:
                    if attempt == retries:
                        raise TransportError(f"endpoint {endpoint} unreachable: {e}") from e
                    await asyncio.sleep(backoff * 2**attempt)
            try:
                response.raise_for_status()
                health = HealthResponse.model_validate(response.json())
            except (httpx.HTTPStatusError, ValueError, ValidationError) as e:
                raise MalformedResponseError(f"bad /healthz response: {e}") from e
        return cls(endpoint, health, transport=transport, retries=retries, backoff=backoff)

    @property
    def config(self) -> ApiConfig:
        return self._config

    @property
    def vocab_size(self) -> int:
        return self.health.vocab_size

    @property
    def ledger(self) -> CostLedger:
        return self._ledger

    @property
    def precision(self) -> Precision:
        return Precision(self.health.precision)

    async def _query(self, payload: dict[str, Any]) -> CompletionResponse:
        return await _post(self._client, payload, self.retries, self.backoff, self._ledger)

    @staticmethod
    def _payload(
        prompt: Sequence[int], bias: Optional[LogitBias], **fields: Any
    ) -> dict[str, Any]:
        payload: dict[str, Any] = {"prompt": [int(t) for t in prompt], **fields}
        if bias is not None and len(bias) > 0:
            payload["logit_bias"] = bias.to_wire()
        return payload

    async def query_all_logits(self, prompt: Sequence[int]) -> np.ndarray:
        body = await self._query(self._payload(prompt, None, full_logits=True))
        if body.logits is None:
            raise MalformedResponseError("response carries no logits")
        return np.array([-np.inf if v is None else v for v in body.logits], dtype=np.float64)

    async def query_topk(
        self, prompt: Sequence[int], bias: Optional[LogitBias] = None
    ) -> TopKResponse:
        body = await self._query(self._payload(prompt, bias, logprobs=self._config.k))
        if not body.top_logprobs:
            raise MalformedResponseError("response carries no top_logprobs")
        generated = body.tokens[0] if body.tokens else None
        return _topk_from_wire(body.top_logprobs[0], generated)

    async def query_argmax(self, prompt: Sequence[int], bias: Optional[LogitBias] = None) -> int:
        body = await self._query(self._payload(prompt, bias))
        if not body.tokens:
            raise MalformedResponseError("response carries no token")
        return int(body.tokens[0])

    async def query_generation_logprobs(
        self, prompt: Sequence[int], bias: Optional[LogitBias], m: int
    ) -> list[TopKResponse]:
        body = await self._query(
            self._payload(prompt, bias, logprobs=self._config.k, max_tokens=m)
        )
        if body.top_logprobs is None or len(body.top_logprobs) != m:
            raise MalformedResponseError(f"expected {m} positions of top_logprobs")
        return [
            _topk_from_wire(mapping, token)
            for mapping, token in zip(body.top_logprobs, body.tokens)
        ]

    async def close(self) -> None:
        await self._client.aclose()
