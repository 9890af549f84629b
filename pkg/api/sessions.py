"""Per-connection sessions over one shared victim."""

import threading
import uuid

from fastapi import Request

from src.models.oracle import ApiConfig
from src.oracle.local import LocalSession
from src.victim.model import Victim

SESSION_HEADER = "X-Session-Token"


class SessionRegistry:
    """One metered session per connection key, all sharing one read-only victim."""

    def __init__(self, victim: Victim, config: ApiConfig):
        self.victim = victim
        self.config = config
        self._sessions: dict[str, LocalSession] = {}
        self._lock = threading.Lock()

    def get(self, key: str) -> LocalSession:
        with self._lock:
            session = self._sessions.get(key)
            if session is None:
                session = LocalSession(self.victim, self.config)
                self._sessions[key] = session
            return session

    def __len__(self) -> int:
        return len(self._sessions)

    def total_queries(self) -> int:
        with self._lock:
            return sum(s.ledger.queries for s in self._sessions.values())


def session_key(request: Request) -> str:
    """The session token header when present, else the client's host:port."""
    token = request.headers.get(SESSION_HEADER)
    if token:
        return f"token:{token}"
    if request.client is None:
        return f"anonymous:{uuid.uuid4()}"
    return f"{request.client.host}:{request.client.port}"
