"""Exceptions raised by dissiped."""

from __future__ import annotations


class DissipedError(Exception):
    """Base class for all package errors."""


class NonFiniteEntryError(DissipedError, ValueError):
    """Matrix or vector contains NaN or Inf."""


class DimensionMismatchError(DissipedError, ValueError):
    """Shapes of the operands do not fit together."""


class SingularMatrixError(DissipedError, ArithmeticError):
    """Pivot below the singularity threshold during a linear solve."""


class NoConvergenceError(DissipedError, ArithmeticError):
    """Eigenvalue iteration did not converge."""


class NotStrictLyapunovError(DissipedError, ValueError):
    """Sampled Lie derivative of W is not strictly negative on the level set."""


class NonFiniteStateError(DissipedError, ArithmeticError):
    """Simulation state blew up."""

    def __init__(self, time: float, message: str | None = None) -> None:
        """Store blow-up time."""
        self.time = time
        super().__init__(message or f"State became non-finite at t = {time:.17g} s.")


class UnknownMetricError(DissipedError, KeyError):
    """Requested trajectory metric is not known."""


class DetectabilityViolatedError(DissipedError, ValueError):
    """Operating point breaks the target observability/detectability requirement."""


class ScenarioNotFoundError(DissipedError, KeyError):
    """Scenario name is neither built in nor a readable scenario file."""
