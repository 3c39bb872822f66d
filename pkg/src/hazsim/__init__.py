"""hazsim: simulation of survival and multi-state event-history data.

Event times are drawn by inverting the cumulative hazard at an
exponential target, using closed forms where they exist and
Gauss-Legendre quadrature plus bracketed root finding everywhere else.
Hazards can be standard parametric families, two-component mixtures,
user-defined expressions of time and covariates, or whole transition
structures over a multi-state model.
"""

from . import dataio, engine, expr, hazards, msm, quad, rootfind, stats, streams
from .engine import SingleDrawResult, simulate_dataset, simulate_single
from .errors import (
    BindingError,
    ConfigError,
    DataError,
    EvaluationError,
    ExpressionError,
    HazsimError,
    NumericError,
    SimulationError,
    UnsupportedModelError,
)
from .hazards import HazardModel
from .msm import MsmSpec, TransitionHazard, TransitionMatrix, simulate_msm_dataset

__version__ = "0.1.0"

__all__ = [
    "dataio",
    "engine",
    "expr",
    "hazards",
    "msm",
    "quad",
    "rootfind",
    "stats",
    "streams",
    "SingleDrawResult",
    "simulate_dataset",
    "simulate_single",
    "simulate_msm_dataset",
    "HazardModel",
    "MsmSpec",
    "TransitionHazard",
    "TransitionMatrix",
    "HazsimError",
    "ExpressionError",
    "BindingError",
    "EvaluationError",
    "ConfigError",
    "DataError",
    "NumericError",
    "SimulationError",
    "UnsupportedModelError",
    "__version__",
]
