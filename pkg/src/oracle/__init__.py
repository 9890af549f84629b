"""Constrained query surfaces over a victim, with cost metering."""

from src.oracle.base import QuerySession
from src.oracle.errors import (
    ApiRejection,
    BiasLimitError,
    BiasLogprobConflictError,
    CapabilityError,
    InvalidRequestError,
    RateLimitError,
    StealerError,
)
from src.oracle.ledger import CostLedger
from src.oracle.local import LocalSession
from src.oracle.transcript import ReplaySession, TranscriptRecorder

__all__ = [
    "QuerySession",
    "LocalSession",
    "CostLedger",
    "TranscriptRecorder",
    "ReplaySession",
    "StealerError",
    "ApiRejection",
    "BiasLimitError",
    "BiasLogprobConflictError",
    "CapabilityError",
    "InvalidRequestError",
    "RateLimitError",
]
