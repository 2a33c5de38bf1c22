"""Exception hierarchy.

Each class carries the process exit code the command-line front end maps it to.
"""


class QCWorkError(Exception):
    exit_code = 1


class ConfigError(QCWorkError, ValueError):
    exit_code = 2


class InvalidDimensionError(QCWorkError, ValueError):
    exit_code = 2


class ConsistencyError(QCWorkError, RuntimeError):
    """An internal numerical identity failed (imaginary residuals, fit gates)."""

    exit_code = 3


class ScanInvalidError(ConsistencyError):
    pass


class DegeneracyError(ConsistencyError):
    pass


class TruncationError(QCWorkError, RuntimeError):
    """The truncated Fock basis is too small (or too large) for the request."""

    exit_code = 4

    def __init__(self, message, required_dim=None):
        super().__init__(message)
        self.required_dim = required_dim


class AccuracyError(QCWorkError, RuntimeError):
    exit_code = 4


class CoverageError(QCWorkError, ValueError):
    """A phase-space grid does not cover the support of a field."""

    exit_code = 4
