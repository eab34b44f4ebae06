"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value or combination."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(RuntimeError):
    """A caller violated an operation's precondition."""


class NonFiniteError(FloatingPointError):
    """NaN or Inf detected in a tensor."""


class DataError(ValueError):
    """Malformed or missing dataset content."""
