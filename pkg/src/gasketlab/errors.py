"""Exception hierarchy shared by all modules.

The CLI maps :class:`ValidationError` subclasses to exit code 1 and
:class:`NumericalError` subclasses to exit code 2.
"""


class GasketError(Exception):
    """Base class for all errors raised by gasketlab."""


class ValidationError(GasketError, ValueError):
    """Bad input: wrong level, malformed field, out-of-range parameter."""


class CapacityError(ValidationError):
    """Requested level exceeds the configured maximum."""


class LevelMismatchError(ValidationError):
    """Two objects living on different graph levels were combined."""


class DomainError(ValidationError):
    """An argument lies outside the domain where an operation is defined."""


class NumericalError(GasketError, ArithmeticError):
    """A numerical procedure failed to deliver a result."""


class SolverError(NumericalError):
    """An iterative solver did not reach its tolerance.

    Attributes
    ----------
    residual : float
        Residual norm at the last iterate.
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DivergenceError(NumericalError):
    """A series does not converge (fugacity at or beyond the radius)."""


class TruncationError(NumericalError):
    """Series truncation cap reached with too much tail mass."""
