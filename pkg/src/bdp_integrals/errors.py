"""
Exception hierarchy shared by the numerical core, the CLI and the HTTP service.
"""

from __future__ import annotations


class BdpError(RuntimeError):
    """Base class for every error raised by bdp_integrals."""


class ModelError(BdpError, ValueError):
    """Raised when a model definition violates its schema or rate invariants."""


class ExpressionError(ModelError):
    """Raised when a rate expression cannot be parsed or bound."""

    def __init__(self, message: str, offset: int | None = None) -> None:
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class RateEvaluationError(ModelError):
    """Raised when a parsed rate expression fails at a particular state."""


class PreconditionError(BdpError, ValueError):
    """Raised when a computation is requested outside its domain (e.g. i in S)."""


class ConvergenceError(BdpError):
    """
    Raised when a continued fraction does not reach its tolerance within max_depth.

    The best value seen and the error estimate achieved are kept for diagnostics.
    """

    def __init__(self, message: str, value: complex | None = None, err_est: float | None = None) -> None:
        super().__init__(message)
        self.value = value
        self.err_est = err_est


class MonotonicityError(BdpError):
    """Raised when search probes contradict the monotone-probability assumption."""


class InfeasibleSearchError(BdpError):
    """Raised by callers that require a feasible search outcome."""
