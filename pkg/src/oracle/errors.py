"""Typed errors raised by query surfaces and their clients."""

from typing import Optional


class StealerError(Exception):
    """Base class for errors raised by this package."""


class ApiRejection(StealerError):
    """A query the API refused. Carries only an error code and message."""

    code = "rejected"

    def __init__(self, message: str = "", code: Optional[str] = None):
        super().__init__(message)
        if code is not None:
            self.code = code
        self.message = message

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


class BiasLimitError(ApiRejection):
    code = "bias_limit"


class CapabilityError(ApiRejection):
    code = "capability"


class BiasLogprobConflictError(ApiRejection):
    code = "bias_xor_logprobs"


class RateLimitError(ApiRejection):
    code = "rate_limited"


class InvalidRequestError(ApiRejection):
    code = "invalid_request"


REJECTIONS: dict[str, type[ApiRejection]] = {
    cls.code: cls
    for cls in (
        BiasLimitError,
        CapabilityError,
        BiasLogprobConflictError,
        RateLimitError,
        InvalidRequestError,
    )
}


def rejection_from_code(code: str, message: str = "") -> ApiRejection:
    """Rebuild the typed rejection for a wire error code."""
    cls = REJECTIONS.get(code, ApiRejection)
    return cls(message, code=code)


class TransportError(StealerError):
    """The endpoint could not be reached after all retries."""


class MalformedResponseError(StealerError):
    """The endpoint answered with something that is not a completion response."""


class TranscriptMismatchError(StealerError):
    """A replayed session received a request that differs from the recording."""
