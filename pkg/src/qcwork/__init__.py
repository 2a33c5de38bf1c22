"""Quantum and classical work statistics for a linearly dragged harmonic oscillator."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .errors import (
    AccuracyError,
    ConfigError,
    ConsistencyError,
    CoverageError,
    DegeneracyError,
    InvalidDimensionError,
    QCWorkError,
    ScanInvalidError,
    TruncationError,
)
from .operators import DensityMatrix, DriveProtocol, FockOperator

__all__ = [
    "__version__",
    "DriveProtocol",
    "FockOperator",
    "DensityMatrix",
    "QCWorkError",
    "ConfigError",
    "InvalidDimensionError",
    "ConsistencyError",
    "ScanInvalidError",
    "DegeneracyError",
    "TruncationError",
    "AccuracyError",
    "CoverageError",
]
