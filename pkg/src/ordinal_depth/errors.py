"""Exception hierarchy shared by every module."""


class OrdinalDepthError(Exception):
    pass


class ShapeError(OrdinalDepthError, ValueError):
    """Tensor extents do not satisfy an operation's contract."""


class ArgumentError(OrdinalDepthError, ValueError):
    """A scalar argument or configuration value is out of range."""


class StateError(OrdinalDepthError, RuntimeError):
    """An object was used in a state it does not support (e.g. a stale tape)."""


class NumericError(OrdinalDepthError, ArithmeticError):
    """A computation produced NaN or Inf."""


class ConfigError(OrdinalDepthError, ValueError):
    """A configuration file could not be parsed or validated."""
