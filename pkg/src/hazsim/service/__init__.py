"""Service layer: request/response models and handlers shared by the
HTTP app and the command-line client."""

from .models import (
    CheckConfigRequest,
    CheckConfigResponse,
    SimulateRequest,
    SimulateResponse,
    TableModel,
    ValidateRequest,
    ValidateResponse,
)

__all__ = [
    "CheckConfigRequest",
    "CheckConfigResponse",
    "SimulateRequest",
    "SimulateResponse",
    "TableModel",
    "ValidateRequest",
    "ValidateResponse",
]
