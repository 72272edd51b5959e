"""Exception types raised across the package."""


class TangoError(Exception):
    """Base class for all package errors."""


class FormatError(TangoError):
    """File does not start with the expected magic bytes."""


class TruncatedError(TangoError):
    """Header dimensions disagree with the payload length."""


class ConfigError(TangoError, ValueError):
    """Invalid configuration or parameter combination."""


class RangeError(TangoError, IndexError):
    """Index or frame window outside the valid range."""


class EmptyInputError(TangoError, ValueError):
    pass


class NoCandidates(TangoError):
    """Every token was masked out before selection."""


class IoError(TangoError, OSError):
    pass
