"""
Exception hierarchy for the blow-up bounds toolkit.

Every class carries the process exit code the CLI maps it to, so callers can
raise the most specific error and let the dispatcher pick the code.
"""
import math
from typing import Optional


class PksBoundsError(Exception):
    """Base class for all toolkit failures"""
    exit_code = 1

    def __init__(self, message: str, detail: Optional[dict] = None):
        super().__init__(message)
        self.message = message
        self.detail = detail or {}

    def to_dict(self) -> dict:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "exit_code": self.exit_code,
            "detail": self.detail,
        }


class InvalidInputError(PksBoundsError, ValueError):
    """Argument out of range, non-finite, or a malformed document"""
    exit_code = 2


class NotApplicableError(PksBoundsError):
    """A bound or criterion does not apply to the given data"""
    exit_code = 3


class SubcriticalMassError(NotApplicableError):
    """Mass M <= 8*pi: no variance criterion is available"""


class CriterionNotSatisfiedError(NotApplicableError):
    """The variance criterion (or a stronger one a bound needs) fails"""


class HypothesisViolationError(NotApplicableError):
    """Initial value does not satisfy f(V0) < 0, i.e. V0 >= lambda*"""


class ValidityThresholdError(NotApplicableError):
    """Asymptotic bound requested outside its validity range"""


class NumericalError(PksBoundsError, ArithmeticError):
    """Root finding, quadrature or time stepping failed"""
    exit_code = 4


class BracketError(NumericalError):
    """No sign change found while expanding a root bracket"""


class OutOfRangeError(NumericalError):
    """Overflow guard tripped"""


class ConvergenceError(NumericalError):
    """Series or iteration hit its cap before converging"""


class SimulationAbort(NumericalError):
    """Non-finite values appeared in a simulated field"""


class CflViolation(NumericalError):
    """Time step exceeds the stability limit of the current state"""


def require_finite(name: str, value: float) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError) as e:
        raise InvalidInputError(f"{name} must be a real number, got {value!r}") from e
    if not math.isfinite(value):
        raise InvalidInputError(f"{name} must be finite, got {value}")
    return value


def require_positive(name: str, value: float) -> float:
    value = require_finite(name, value)
    if value <= 0:
        raise InvalidInputError(f"{name} must be positive, got {value}")
    return value


def require_nonnegative(name: str, value: float) -> float:
    value = require_finite(name, value)
    if value < 0:
        raise InvalidInputError(f"{name} must be nonnegative, got {value}")
    return value
