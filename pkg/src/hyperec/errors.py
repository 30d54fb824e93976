"""Exception hierarchy shared across the package.

The command line maps these classes onto process exit codes:
configuration and usage problems exit 1, data and I/O problems exit 2,
numeric failures exit 3.
"""


class HyperecError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(HyperecError):
    """Invalid configuration, parameter values, or command usage."""


class DataError(HyperecError):
    """Malformed, inconsistent, or missing input data."""


class NumericError(HyperecError):
    """Numerical failure while training a model or solving a system."""


class ConvergenceError(NumericError):
    """An iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message: str, last_delta: float | None = None):
        super().__init__(message)
        self.last_delta = last_delta
