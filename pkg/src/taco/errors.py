"""Exception types shared across the package."""


class TacoError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(TacoError, ValueError):
    """Invalid parameter value or argument combination."""


class DimensionMismatchError(ParameterError):
    """Operands disagree on vector dimensionality."""


class InsufficientDataError(ParameterError):
    """Not enough points for the requested operation."""


class EmptyInputError(ParameterError):
    """An operation received zero records."""


class NumericError(TacoError):
    """Non-finite values where finite ones are required."""


class ConvergenceError(TacoError):
    """An iterative solver failed to reach tolerance within its cap."""


class FormatError(TacoError):
    """Malformed file contents."""


class UnsupportedVersionError(FormatError):
    """File written by an incompatible format version."""


class CorruptionError(FormatError):
    """Checksum or length mismatch while reading a binary file."""


class StateError(TacoError):
    """Operation requires state that was not retained."""
