"""Exception hierarchy shared by all modules."""


class FracExtError(Exception):
    """Base class for every error raised by fracext."""


class DataError(FracExtError, ValueError):
    """Input values are non-finite or otherwise unusable."""


class ShapeError(FracExtError, ValueError):
    """Array shape does not match the grid."""


class DomainError(FracExtError, ValueError):
    """Argument lies outside the mathematical domain of the operation."""


class ArgumentError(FracExtError, ValueError):
    """Invalid parameter combination."""


class ResolutionError(FracExtError, ValueError):
    """The grid is too coarse for the requested operation."""


class ConsistencyError(FracExtError, RuntimeError):
    """An internal numerical consistency check failed."""
