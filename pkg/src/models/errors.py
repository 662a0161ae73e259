"""
Exception types raised by the laboratory.
Each one also derives from the builtin a caller would naturally catch.
"""

from typing import Any, List, Optional


class LabError(Exception):
    """Base class for every error raised by the package."""


class GridMismatchError(LabError, ValueError):
    """Fields or operators defined on different grids were combined."""


class ScaleRangeError(LabError, ValueError):
    """A scaling factor left the window where Fourier resampling is trusted."""


class LabDomainError(LabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class InputError(LabError, ValueError):
    """Degenerate or malformed input (too few samples, repeated step sizes...)."""


class BasinError(LabError, RuntimeError):
    """The modulation Newton solve left the basin of the soliton orbit."""

    def __init__(self, message: str, last_params: Optional[Any] = None, iterations: int = 0):
        super().__init__(message)
        self.last_params = last_params
        self.iterations = iterations


class ScenarioValidationError(LabError, ValueError):
    """A scenario config violates one or more constraints."""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__(f"Invalid scenario config: {'; '.join(self.violations)}")

    def __reduce__(self):
        return (self.__class__, (self.violations,))


class NumericalFailure(LabError, RuntimeError):
    """Samples became non-finite during time integration."""

    def __init__(self, message: str, last_good: Optional[Any] = None):
        super().__init__(message)
        self.last_good = last_good
