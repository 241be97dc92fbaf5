"""
Exception types raised by the estimation library.
"""
from typing import Optional


class FilterLabError(ValueError):
    """Base class for every domain failure."""


class DimensionError(FilterLabError):
    """Operands have non-conformable shapes."""


class CovarianceError(FilterLabError):
    """A covariance matrix is asymmetric or indefinite."""


class NumericalError(FilterLabError):
    """Non-finite values, probability leakage or an empty posterior."""


class SingularMatrixError(FilterLabError):
    """A matrix that must be inverted is singular or numerically so."""

    def __init__(self, name: str, condition: float, step: Optional[int] = None):
        self.name = name
        self.condition = condition
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(
            f"{name} is singular{where} (condition estimate {condition:.3e})"
        )

    def at_step(self, step: int) -> "SingularMatrixError":
        """Return a copy tagged with the filter step index."""
        return SingularMatrixError(self.name, self.condition, step)


class UnknownModelError(FilterLabError):
    """Requested built-in model does not exist."""


class IncompatibleFilterError(FilterLabError):
    """Filter kind cannot run on the given model kind."""


class ConfigError(FilterLabError):
    """Scenario document is invalid."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
