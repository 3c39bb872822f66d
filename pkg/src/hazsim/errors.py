"""Exception hierarchy shared across the package.

Every error raised on a user-facing path derives from HazsimError so the
CLI and service layers can map failures to exit codes / HTTP statuses in
one place.
"""


class HazsimError(Exception):
    """Base class for all package errors."""


class ExpressionError(HazsimError):
    """Syntax error in a hazard expression (bad token, bad grammar)."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class BindingError(HazsimError):
    """A covariate referenced by an expression is absent from the data."""


class EvaluationError(HazsimError):
    """Domain error while evaluating an expression (log of a negative, ...)."""

    def __init__(self, message, t=None):
        if t is not None:
            message = f"{message} (at t={t:g})"
        super().__init__(message)
        self.t = t


class ConfigError(HazsimError):
    """Invalid run configuration (missing fields, bad combinations)."""


class DataError(HazsimError):
    """Invalid input data (malformed CSV, non-numeric cell, bad per-row value)."""


class NumericError(HazsimError):
    """Numerical failure: non-finite value where a finite one is required,
    broken bracket, degenerate hazard at an event time."""


class SimulationError(HazsimError):
    """A simulated path ran away (transition-count cap exceeded)."""


class UnsupportedModelError(HazsimError):
    """The requested operation does not support this model class."""
