"""Error types shared by every slice of the toolkit."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np


class ErrorType(Enum):
    DOMAIN = "domain"
    CONFIG = "config"
    NUMERIC = "numeric"
    DATA = "data"
    STORAGE = "storage"


@dataclass
class SurrogateError(Exception):
    message: str
    error_type: ErrorType = ErrorType.NUMERIC
    context: dict[str, Any] = field(default_factory=dict)
    original_error: Exception | None = None

    def __str__(self) -> str:
        return self.message


@dataclass
class DomainError(SurrogateError):
    error_type: ErrorType = ErrorType.DOMAIN


@dataclass
class ConfigError(SurrogateError):
    error_type: ErrorType = ErrorType.CONFIG


@dataclass
class DataError(SurrogateError):
    error_type: ErrorType = ErrorType.DATA


@dataclass
class StorageError(SurrogateError):
    error_type: ErrorType = ErrorType.STORAGE


@dataclass
class NumericError(SurrogateError):
    error_type: ErrorType = ErrorType.NUMERIC
    residual: float | None = None


@dataclass
class SingularSystemError(NumericError):
    pass


@dataclass
class ConvergenceError(NumericError):
    last_iterate: np.ndarray | None = None
    iterations: int = 0


EXIT_CODES: dict[ErrorType, int] = {
    ErrorType.DOMAIN: 2,
    ErrorType.CONFIG: 2,
    ErrorType.NUMERIC: 3,
    ErrorType.DATA: 3,
    ErrorType.STORAGE: 4,
}


@dataclass
class ErrorMapping:
    error_pattern: str
    user_message: str
    suggest_action: str | None = None


ERROR_MAPPINGS: list[ErrorMapping] = [
    ErrorMapping(
        error_pattern="not nested|divisible|resolve",
        user_message="Fine and coarse meshes are incompatible.",
        suggest_action="Choose element counts whose fine/coarse ratio is an integer.",
    ),
    ErrorMapping(
        error_pattern="dirichlet|singular",
        user_message="The linear system is singular.",
        suggest_action="Constrain at least one node with a Dirichlet value.",
    ),
    ErrorMapping(
        error_pattern="did not converge|non-convergence|max iterations",
        user_message="An iterative solver did not converge.",
        suggest_action="Raise the iteration limit or loosen the tolerance.",
    ),
    ErrorMapping(
        error_pattern="non-finite|nan|inf",
        user_message="A computation produced non-finite values.",
        suggest_action="Check conductivities and feature normalization.",
    ),
    ErrorMapping(
        error_pattern="no such file|not found|permission",
        user_message="A required file could not be read or written.",
        suggest_action="Check the --config and --out paths.",
    ),
]


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, SurrogateError):
        return EXIT_CODES[error.error_type]
    if isinstance(error, OSError):
        return EXIT_CODES[ErrorType.STORAGE]
    return 1


def describe_error(error: BaseException | str) -> str:
    error_message = str(error)
    error_lower = error_message.lower()
    for mapping in ERROR_MAPPINGS:
        if re.search(mapping.error_pattern, error_lower):
            if mapping.suggest_action:
                return f"{mapping.user_message} {mapping.suggest_action} ({error_message})"
            return f"{mapping.user_message} ({error_message})"
    return error_message or "An unexpected error occurred."


__all__ = [
    "ErrorType",
    "SurrogateError",
    "DomainError",
    "ConfigError",
    "DataError",
    "StorageError",
    "NumericError",
    "SingularSystemError",
    "ConvergenceError",
    "EXIT_CODES",
    "exit_code_for",
    "describe_error",
]
