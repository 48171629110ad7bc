"""Exception types shared across the package."""


class LkfsError(Exception):
    """Base class for all errors raised by this package."""


class DataValidationError(LkfsError):
    """Input data violates a structural or numeric requirement."""


class ConfigError(LkfsError):
    """Invalid configuration value or parameter combination."""


class NumericalError(LkfsError):
    """A computation produced non-finite or degenerate results."""
