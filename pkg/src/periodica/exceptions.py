"""Exception hierarchy shared across the package."""


class PeriodicaError(Exception):
    """Base class for all package errors."""


class SeriesFormatError(PeriodicaError, ValueError):
    """Malformed input series (CSV layout, spacing, values)."""


class ConfigError(PeriodicaError, ValueError):
    """Invalid configuration or parameter value."""


class NumericalError(PeriodicaError, ArithmeticError):
    """A numerical routine could not produce a valid result."""


class SingularCovarianceError(NumericalError):
    pass


class ImputationError(NumericalError):
    pass
