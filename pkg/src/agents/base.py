"""Shared plumbing for harness agents: quiet-aware logging and timed results."""

import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Iterable, Optional

from src.utils.log import log


@dataclass
class AgentResult:
    """What an agent hands back: its payload, a one-line message and failure notes.

    Failed attack runs are data, not errors, for suite agents; `errors` lists
    them so callers can print them, and `success` stays True.
    """

    success: bool
    data: dict[str, Any]
    message: str
    timestamp: datetime
    duration_ms: int
    errors: list[str] = field(default_factory=list)

    def summary(self) -> str:
        return f"{self.message} in {self.duration_ms / 1000:.1f}s"


class BaseAgent(ABC):
    """An experiment driver. Subclasses name themselves and implement run()."""

    agent_name: str = "agent"

    def __init__(self, config: Optional[dict] = None):
        self.config = config or {}
        self.quiet = bool(self.config.get("quiet", False))
        self._started = time.perf_counter()

    @abstractmethod
    async def run(self, *args, **kwargs) -> AgentResult:
        """Execute the agent's experiment."""

    def log(self, message: str, level: str = "info") -> None:
        if self.quiet and level == "info":
            return
        log(self.agent_name, message, level)

    def start(self) -> None:
        """Reset the clock that finish() reports against."""
        self._started = time.perf_counter()

    def finish(
        self,
        data: dict[str, Any],
        message: str,
        errors: Iterable[str] = (),
        success: Optional[bool] = None,
    ) -> AgentResult:
        """Stamp a result with the time since start(); success defaults to "no errors"."""
        errors = list(errors)
        elapsed = time.perf_counter() - self._started
        return AgentResult(
            success=not errors if success is None else success,
            data=data,
            message=message,
            timestamp=datetime.now(timezone.utc),
            duration_ms=int(elapsed * 1000),
            errors=errors,
        )
