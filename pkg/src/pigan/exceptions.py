"""Exception hierarchy shared by every pigan module."""


class PiganError(Exception):
    """Base class for all library errors."""


class DimensionError(PiganError, ValueError):
    pass


class DomainError(PiganError, ValueError):
    pass


class ConsistencyError(PiganError, RuntimeError):
    """An internal identity or bookkeeping check failed."""


class NumericError(PiganError, FloatingPointError):
    pass


class UnsupportedLimitError(PiganError, ValueError):
    pass


class CoverageError(PiganError, ValueError):
    pass


class FormatError(PiganError, ValueError):
    """Malformed file. ``offset`` is the byte position where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class VersionError(FormatError):
    pass


class ConfigError(PiganError, ValueError):
    pass


class DataError(PiganError, LookupError):
    """Required data (such as a label for a retrieved id) is missing."""
