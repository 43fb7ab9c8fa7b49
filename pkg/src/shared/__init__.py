"""Shared utilities for the coarse surrogate toolkit."""

from src.shared.errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    DomainError,
    ErrorType,
    NumericError,
    SingularSystemError,
    StorageError,
    SurrogateError,
    describe_error,
    exit_code_for,
)
from src.shared.logging import (
    ContextAdapter,
    LoggingConfig,
    LogLevel,
    get_logger,
    log_with_context,
    setup_logging,
)
from src.shared.validation import (
    ConfigValidator,
    MeshValidator,
    RangeValidator,
    ValidationResult,
)

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "DomainError",
    "ErrorType",
    "NumericError",
    "SingularSystemError",
    "StorageError",
    "SurrogateError",
    "describe_error",
    "exit_code_for",
    "ContextAdapter",
    "LoggingConfig",
    "LogLevel",
    "get_logger",
    "log_with_context",
    "setup_logging",
    "ConfigValidator",
    "MeshValidator",
    "RangeValidator",
    "ValidationResult",
]
