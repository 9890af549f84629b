"""POST /v1/completions: every session operation behind one endpoint.

The request shape picks the operation:
  full_logits=true              -> full logit vector
  no logprobs                   -> argmax token only
  logprobs=K, max_tokens=1      -> top-K logprobs
  logprobs=K, max_tokens=m > 1  -> m greedy tokens with top-K logprobs each
"""

import math
from typing import Optional

from fastapi import APIRouter, Request
from fastapi.responses import JSONResponse

from api.models import CompletionRequest, CompletionResponse, ErrorBody, Usage
from api.sessions import session_key
from src.models.oracle import LedgerSnapshot, LogitBias, TopKResponse
from src.oracle.base import QuerySession
from src.oracle.errors import ApiRejection, InvalidRequestError

router = APIRouter()


def _finite(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


def _top_logprobs(response: TopKResponse, k: int) -> dict[str, Optional[float]]:
    return {str(t): _finite(lp) for t, lp in response.items[:k]}


def _usage(delta: LedgerSnapshot) -> Usage:
    return Usage(
        queries=delta.queries,
        prompt_tokens=delta.tokens_in,
        completion_tokens=delta.tokens_out,
        overhead_tokens=delta.overhead_tokens,
        total_tokens=delta.tokens_total,
    )


async def _dispatch(session: QuerySession, body: CompletionRequest) -> CompletionResponse:
    bias = LogitBias.from_wire(body.logit_bias) if body.logit_bias else None
    if body.full_logits:
        logits = await session.query_all_logits(body.prompt)
        return CompletionResponse(logits=[_finite(float(v)) for v in logits])

    if body.logprobs is None:
        if body.max_tokens > 1:
            raise InvalidRequestError("multi-token generation requires logprobs")
        winner = await session.query_argmax(body.prompt, bias)
        return CompletionResponse(tokens=[winner])

    k = min(body.logprobs, session.config.k)
    if body.max_tokens == 1:
        response = await session.query_topk(body.prompt, bias)
        return CompletionResponse(
            tokens=[response.generated if response.generated is not None else response.top_token],
            top_logprobs=[_top_logprobs(response, k)],
        )

    responses = await session.query_generation_logprobs(body.prompt, bias, body.max_tokens)
    return CompletionResponse(
        tokens=[r.generated if r.generated is not None else r.top_token for r in responses],
        top_logprobs=[_top_logprobs(r, k) for r in responses],
    )


@router.post("/v1/completions", response_model=CompletionResponse)
async def create_completion(body: CompletionRequest, request: Request):
    """Run one metered query against this connection's session."""
    session = request.app.state.sessions.get(session_key(request))
    before = session.ledger.snapshot()
    try:
        result = await _dispatch(session, body)
    except ApiRejection as e:
        usage = _usage(session.ledger.snapshot().minus(before))
        return JSONResponse(
            status_code=400,
            content={
                "error": ErrorBody(code=e.code, message=e.message).model_dump(),
                "usage": usage.model_dump(),
            },
        )
    result.usage = _usage(session.ledger.snapshot().minus(before))
    return result
