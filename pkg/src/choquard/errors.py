"""Exception hierarchy shared by all modules."""


class ChoquardError(Exception):
    """Base class for errors raised by this package."""


class DomainError(ChoquardError, ValueError):
    """Parameters outside the range where a quantity is defined."""


class ConfigError(ChoquardError, ValueError):
    """Invalid discretisation or run configuration."""


class UsageError(ChoquardError, TypeError):
    """Objects combined in an unsupported way (grid or sector mismatch, ...)."""


class ConvergenceError(ChoquardError, RuntimeError):
    """An iteration stopped before reaching its tolerance.

    ``trace`` holds the residual history so callers can report it.
    """

    def __init__(self, message, trace=None, state=None):
        super().__init__(message)
        self.trace = list(trace or [])
        self.state = state


class SearchFailure(ChoquardError, RuntimeError):
    """A bracketing search (shooting) could not find a sign change."""
