"""Run the completions app under uvicorn, in the foreground or a background thread."""

from __future__ import annotations

import socket
import threading
import time
from typing import Optional

import uvicorn

from api.main import create_app
from src.models.oracle import ApiConfig
from src.oracle.errors import StealerError
from src.victim.model import Victim

STARTUP_TIMEOUT_S = 10.0


class ServerBindError(StealerError):
    """The bind address is unusable."""


def parse_bind(bind: str) -> tuple[str, int]:
    """Split "host:port"; a bare port binds loopback."""
    host, _, port = bind.rpartition(":")
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise ServerBindError(f"bad bind address {bind!r}, expected host:port")


class ServerHandle:
    """A bound uvicorn server that can be started, waited on and stopped."""

    def __init__(self, victim: Victim, config: ApiConfig, bind: str = "127.0.0.1:8000"):
        self.host, self.port = parse_bind(bind)
        self.app = create_app(victim, config)
        self.server = uvicorn.Server(
            uvicorn.Config(self.app, host=self.host, port=self.port, log_level="warning")
        )
        self._socket: Optional[socket.socket] = None
        self._thread: Optional[threading.Thread] = None

    @property
    def endpoint(self) -> str:
        return f"http://{self.host}:{self.port}"

    def bind(self) -> "ServerHandle":
        family = socket.AF_INET6 if ":" in self.host else socket.AF_INET
        sock = socket.socket(family, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((self.host, self.port))
        except OSError as e:
            sock.close()
            raise ServerBindError(f"cannot bind {self.host}:{self.port}: {e}") from e
        sock.listen(128)
        sock.set_inheritable(True)
        # port 0 asks the OS for a free port
        self.port = sock.getsockname()[1]
        self._socket = sock
        return self

    def serve_forever(self) -> None:
        """Block until SIGINT/SIGTERM, then shut down gracefully."""
        if self._socket is None:
            self.bind()
        self.server.run(sockets=[self._socket])

    def start(self) -> "ServerHandle":
        """Serve from a daemon thread and wait until the app is accepting requests."""
        if self._socket is None:
            self.bind()
        self._thread = threading.Thread(
            target=self.server.run, kwargs={"sockets": [self._socket]}, daemon=True
        )
        self._thread.start()
        deadline = time.monotonic() + STARTUP_TIMEOUT_S
        while not self.server.started:
            if not self._thread.is_alive() or time.monotonic() > deadline:
                raise ServerBindError(f"server on {self.endpoint} failed to start")
            time.sleep(0.01)
        return self

    def stop(self) -> None:
        self.server.should_exit = True
        if self._thread is not None:
            self._thread.join(timeout=STARTUP_TIMEOUT_S)
            self._thread = None
        if self._socket is not None:
            self._socket.close()
            self._socket = None

    def __enter__(self) -> "ServerHandle":
        return self.start()

    def __exit__(self, *exc: object) -> None:
        self.stop()


def serve(
    victim: Victim, config: Optional[ApiConfig] = None, bind: str = "127.0.0.1:8000"
) -> ServerHandle:
    """Start serving `victim` in the background and return the running handle."""
    return ServerHandle(victim, config or ApiConfig(), bind).start()
