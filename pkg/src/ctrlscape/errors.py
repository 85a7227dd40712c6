"""Exception types shared across the package."""


class LandscapeError(Exception):
    """Base class for all package errors."""


class InvalidArgument(LandscapeError, ValueError):
    """Input violates a documented precondition."""


class NumericFailure(LandscapeError, ArithmeticError):
    """A numerical routine produced non-finite values or failed to converge."""


class UndefinedResult(LandscapeError, ValueError):
    """The requested quantity is mathematically undefined for this input."""
