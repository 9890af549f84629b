"""Wire models for the completions endpoint."""

from typing import Any, Optional

from pydantic import BaseModel, Field, field_validator


class CompletionRequest(BaseModel):
    """POST /v1/completions body. Prompts are token ids, not text."""

    prompt: list[int] = Field(..., min_length=1)
    logit_bias: dict[str, float] = Field(default_factory=dict)
    logprobs: Optional[int] = Field(None, ge=1, description="Top-K logprobs per position")
    max_tokens: int = Field(1, ge=1, le=4096)
    full_logits: bool = Field(False, description="Return the whole logit vector")

    @field_validator("logit_bias")
    @classmethod
    def _integer_keys(cls, value: dict[str, float]) -> dict[str, float]:
        for key in value:
            try:
                int(key)
            except ValueError:
                raise ValueError(f"logit_bias key {key!r} is not a token id")
        return value


class Usage(BaseModel):
    """What the request was billed, as counted by the server's ledger."""

    queries: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    overhead_tokens: int = 0
    total_tokens: int = 0


class ErrorBody(BaseModel):
    code: str
    message: str


class CompletionResponse(BaseModel):
    """Generated tokens plus per-position top logprobs (ranked), or full logits."""

    tokens: list[int] = Field(default_factory=list)
    top_logprobs: Optional[list[dict[str, Optional[float]]]] = None
    logits: Optional[list[Optional[float]]] = None
    usage: Usage = Field(default_factory=Usage)
    error: Optional[ErrorBody] = None


class HealthResponse(BaseModel):
    """GET /healthz: the surface descriptor an attacker is allowed to see."""

    status: str
    service: str
    version: str
    vocab_size: int
    precision: str
    api: dict[str, Any]
