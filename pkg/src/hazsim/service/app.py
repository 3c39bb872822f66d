"""FastAPI wiring around the handlers."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..errors import (
    BindingError,
    ConfigError,
    DataError,
    ExpressionError,
    HazsimError,
)
from . import handlers
from .models import (
    CheckConfigRequest,
    CheckConfigResponse,
    SimulateRequest,
    SimulateResponse,
    ValidateRequest,
    ValidateResponse,
)

app = FastAPI(title="hazsim", description="Survival and multi-state simulation")

_CLIENT_ERRORS = (ConfigError, DataError, ExpressionError, BindingError)


@app.exception_handler(HazsimError)
async def hazsim_error_handler(request: Request, exc: HazsimError):
    status = 422 if isinstance(exc, _CLIENT_ERRORS) else 500
    return JSONResponse(status_code=status, content={"detail": str(exc)})


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.post("/simulate")
def simulate(req: SimulateRequest) -> SimulateResponse:
    return handlers.simulate(req)


@app.post("/check-config")
def check_config(req: CheckConfigRequest) -> CheckConfigResponse:
    return handlers.check_config(req)


@app.post("/validate")
def validate(req: ValidateRequest) -> ValidateResponse:
    return handlers.validate(req)
