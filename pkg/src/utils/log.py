"""Component log lines on stderr."""

from datetime import datetime, timezone

from rich.console import Console

_console = Console(stderr=True, highlight=False)


def log(component: str, message: str, level: str = "info") -> None:
    """Print one `[timestamp] [component] [LEVEL] message` line to stderr."""
    timestamp = datetime.now(timezone.utc).isoformat()
    _console.print(f"[{timestamp}] [{component}] [{level.upper()}] {message}", markup=False)
