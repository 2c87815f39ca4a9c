"""Exception hierarchy shared across the package.

Validation errors map to CLI exit code 1, numerical failures to exit code 2.
"""


class RdetcError(Exception):
    """Base class for all package errors."""


class ValidationError(RdetcError):
    """Invalid input, configuration, or violated precondition."""


class ConfigError(ValidationError):
    """Scenario or file-format problem; carries the offending field name."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NumericalError(RdetcError):
    """Base class for runtime numerical failures."""


class ConvergenceError(NumericalError):
    """Fixed-point iteration did not converge; carries the last residual."""

    def __init__(self, message, last_change=None, iterations=None):
        super().__init__(message)
        self.last_change = last_change
        self.iterations = iterations


class DivergenceError(NumericalError):
    """Simulated state blew up; carries the time of detection."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class InfeasibleError(NumericalError):
    """A parameter-selection inequality cannot be satisfied."""

    def __init__(self, message, margin=None):
        super().__init__(message)
        self.margin = margin


class InvariantViolation(NumericalError):
    """A quantity left the region the design guarantees (e.g. m >= 0)."""
