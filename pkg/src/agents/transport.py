"""Open a query session on a victim over the configured transport."""

import asyncio
from contextlib import asynccontextmanager
from typing import AsyncIterator

import httpx

from api.main import create_app
from api.server import ServerHandle
from src.clients.completions import RemoteSession
from src.models.experiment import TransportKind
from src.models.oracle import ApiConfig
from src.oracle.base import QuerySession
from src.oracle.local import LocalSession
from src.victim.model import Victim

ASGI_ENDPOINT = "http://victim"


@asynccontextmanager
async def open_session(
    victim: Victim,
    config: ApiConfig,
    transport: TransportKind = TransportKind.IN_PROCESS,
    bind_host: str = "127.0.0.1",
) -> AsyncIterator[QuerySession]:
    """A fresh session with its own ledger.

    `asgi` drives the FastAPI app through httpx without a socket; `http`
    starts a loopback server on a free port for the lifetime of the session.
    """
    if transport == TransportKind.IN_PROCESS:
        yield LocalSession(victim, config)
        return

    if transport == TransportKind.ASGI:
        app = create_app(victim, config)
        session = await RemoteSession.connect(
            ASGI_ENDPOINT, transport=httpx.ASGITransport(app=app)
        )
        try:
            yield session
        finally:
            await session.close()
        return

    handle = ServerHandle(victim, config, f"{bind_host}:0")
    await asyncio.to_thread(handle.start)
    try:
        session = await RemoteSession.connect(handle.endpoint)
        try:
            yield session
        finally:
            await session.close()
    finally:
        await asyncio.to_thread(handle.stop)
