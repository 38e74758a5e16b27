"""Exception taxonomy shared across the package.

The CLI maps exception groups to exit codes: configuration problems exit
with 2, numeric failures with 3, and validation failures with 4.
"""

from __future__ import annotations


class NpeBenchError(Exception):
    """Base class for all package errors."""


class ConfigError(NpeBenchError):
    """Invalid configuration value or malformed config file."""


class NotRegistered(ConfigError):
    """Unknown simulator name."""


class InvalidSampleSize(ConfigError):
    """Requested dataset size outside the simulator's allowed range."""


class ShapeError(ConfigError):
    """Tensor shape does not match the declared interface."""


class CorruptCheckpoint(ConfigError):
    """Checkpoint manifest and payload disagree."""


class NumericsError(NpeBenchError):
    """Non-finite value produced inside a network forward pass."""


class SamplingDiverged(NumericsError):
    """Reverse-ODE trajectory left the finite range."""


class PreprocessError(NumericsError):
    """Non-finite intermediate during parameter/data preprocessing."""


class DomainError(NumericsError):
    """Function argument outside its mathematical domain."""


class IntegrationError(NumericsError):
    """ODE step produced a non-finite state."""


class CholeskyError(NumericsError):
    """Covariance matrix not positive definite even after jitter retries."""


class StationarityError(NumericsError):
    """Coefficient shrinkage failed to reach a stationary process."""


class ValidationError(NpeBenchError):
    """Calibration run failed, e.g. too many skipped rounds."""


class NoOracle(ValidationError):
    """No closed-form posterior exists for the requested simulator."""


class EmptyReport(ValidationError):
    """Report aggregation received no input runs."""


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VALIDATION = 4


def exit_code_for(exc: BaseException) -> int:
    """Exit code the CLI should use for ``exc``."""
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NumericsError):
        return EXIT_NUMERIC
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION
    return 1
