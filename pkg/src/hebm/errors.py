"""Exception types shared across the package."""


class HebmError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(HebmError):
    """Array dimensions do not match an operation's contract."""


class StateError(HebmError):
    """Object used outside its lifecycle (e.g. empty or reused tape)."""


class ConfigError(HebmError):
    """Bad configuration key, value, or statistic setup."""


class NumericError(HebmError):
    """Non-finite values, divergence, or a failed numeric precondition."""


class ParseError(HebmError):
    """Malformed input file; message carries the line number."""
