"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """Shapes, dimensions or values outside an operation's domain."""


class NumericalFailureError(ArithmeticError):
    """A factorization failed even after the full jitter ladder."""


class UnsupportedInputError(ValueError):
    """Input is valid in general but not handled by this routine."""


class DataError(ValueError):
    """A data file could not be parsed."""
