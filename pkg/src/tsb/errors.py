"""Exception types shared across the package."""


class TsbError(Exception):
    """Base class for all package errors."""


class DimensionError(TsbError, ValueError):
    """Operand shapes are incompatible."""


class NumericError(TsbError, FloatingPointError):
    """A NaN or infinite value was produced or consumed."""


class ContractError(TsbError, RuntimeError):
    """A call violated an operation's preconditions."""


class ConfigError(TsbError, ValueError):
    """A configuration value is invalid."""
