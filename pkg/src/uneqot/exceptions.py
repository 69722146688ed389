class UneqOTError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(UneqOTError, ValueError):
    """Incompatible or malformed problem description."""


class NumericalError(UneqOTError, RuntimeError):
    """A numerical procedure failed (bracketing, convergence, quadrature)."""


class HypothesisViolation(UneqOTError):
    """A structural hypothesis of the model does not hold on this instance."""


class DivergenceError(NumericalError):
    """Fixed-point iteration stopped contracting."""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log
