"""FastAPI application factory for the completions surface."""

from contextlib import asynccontextmanager
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from api.models import HealthResponse
from api.routes import completions
from api.sessions import SessionRegistry
from src import __version__
from src.models.oracle import ApiConfig
from src.utils.log import log
from src.victim.model import Victim

SERVICE_NAME = "logit-stealer-victim"


def create_app(victim: Victim, config: Optional[ApiConfig] = None) -> FastAPI:
    """Serve `victim` behind the given API surface."""
    config = config or ApiConfig()
    registry = SessionRegistry(victim, config)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        log(
            "server",
            f"serving {victim.spec.name} (l={victim.vocab_size}) in {config.mode.value} mode, "
            f"k={config.k}, B={config.bias_bound}, N={config.bias_max_entries}",
        )
        yield
        log(
            "server",
            f"shutting down after {registry.total_queries()} queries "
            f"across {len(registry)} sessions",
        )

    app = FastAPI(
        title="Logit Stealer Victim",
        description="Completions-style query surface over a synthetic language model",
        version=__version__,
        lifespan=lifespan,
    )
    app.state.sessions = registry

    @app.exception_handler(RequestValidationError)
    async def _invalid_request(request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(
            status_code=400,
            content={
                "error": {"code": "invalid_request", "message": str(exc.errors())},
                "usage": {},
            },
        )

    app.include_router(completions.router, tags=["Completions"])

    @app.get("/healthz", response_model=HealthResponse)
    async def healthz():
        """Health check with the public surface descriptor."""
        return HealthResponse(
            status="healthy",
            service=SERVICE_NAME,
            version=__version__,
            vocab_size=victim.vocab_size,
            precision=(config.logprob_precision or victim.spec.precision).value,
            api=config.descriptor(),
        )

    return app
