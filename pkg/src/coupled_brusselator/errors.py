"""Exception types shared across the package."""


class BrusselatorError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(BrusselatorError, ValueError):
    """Raised when an argument violates an operation's precondition."""


class NumericalError(BrusselatorError, ArithmeticError):
    """Raised when a computation produces non-finite values."""


class DivergenceError(NumericalError):
    """Raised when the blowup guard trips during time stepping.

    Attributes
    ----------
    time : float
        Simulation time at which the guard was exceeded.
    """

    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


class DegeneracyError(NumericalError):
    """Raised when a tangent bundle loses rank."""


class ConfigError(BrusselatorError, ValueError):
    """Raised for malformed or invalid experiment configuration."""
