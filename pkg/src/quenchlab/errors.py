"""Exception types shared across the package."""


class QuenchLabError(Exception):
    """Base class for all package errors."""


class DomainError(QuenchLabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class AccuracyError(QuenchLabError, RuntimeError):
    """A series or quadrature failed to reach its accuracy target."""


class NumericalFailure(QuenchLabError, RuntimeError):
    """A numerical routine produced a result failing its residual check."""


class ConfigError(QuenchLabError, ValueError):
    """An experiment configuration is malformed or violates a constraint."""
