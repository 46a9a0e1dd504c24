"""Exception types shared across the package."""


class VoltbridgeError(Exception):
    """Base class for all package errors."""


class DomainError(VoltbridgeError, ValueError):
    """Argument outside the documented domain of a function."""


class ConvergenceError(VoltbridgeError, ArithmeticError):
    """An iterative scheme stopped before reaching its tolerance."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class DegenerateKernelError(VoltbridgeError, ArithmeticError):
    """The terminal kernel row vanishes somewhere, so the prediction martingale degenerates."""


class SingularMatrixError(VoltbridgeError, ArithmeticError):
    """A matrix that must be inverted is singular or too ill-conditioned."""


class FactorizationError(VoltbridgeError, ArithmeticError):
    """Cholesky factorization failed even after the maximal jitter."""


class DimensionError(VoltbridgeError, ValueError):
    """Grids or array shapes do not match."""


class SchemaError(VoltbridgeError, ValueError):
    """A CSV input does not follow its documented schema."""


class InsufficientSampleError(VoltbridgeError, ValueError):
    """Too few (or degenerate) samples for a statistic to be defined."""


class MissingIncrementsError(VoltbridgeError, ValueError):
    """An ensemble does not carry the driving Brownian increments."""


class TruncationWarning(UserWarning):
    """The finite horizon leaves a noticeable part of the half-line unresolved."""
