"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: argument misuse -> 2, data/format
problems -> 3, provider failures -> 4, anything else -> 5.
"""


class PanoliftError(Exception):
    """Base class for all package errors."""


class ArgumentError(PanoliftError, ValueError):
    """An argument violates a documented precondition."""


class FormatError(PanoliftError):
    """A file or byte stream does not conform to its declared format."""


class DataError(PanoliftError):
    """Input data values violate an invariant (e.g. non-positive depth)."""


class InsufficientDataError(DataError):
    """Too few valid samples to carry out an estimation."""


class ProviderError(PanoliftError):
    """A depth provider failed (missing file, bad response, bad values)."""
