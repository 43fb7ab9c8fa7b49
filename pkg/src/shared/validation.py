"""Input validation utilities for physical parameters, meshes and configs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any


@dataclass
class ValidationResult:
    is_valid: bool
    error_message: str | None = None
    normalized_value: Any = None


class RangeValidator:
    @staticmethod
    def positive(value: Any, name: str) -> ValidationResult:
        try:
            number = float(value)
        except (TypeError, ValueError):
            return ValidationResult(
                is_valid=False,
                error_message=f"{name} must be a number, got {value!r}",
            )
        if not math.isfinite(number):
            return ValidationResult(
                is_valid=False,
                error_message=f"{name} must be finite, got {number}",
            )
        if number <= 0:
            return ValidationResult(
                is_valid=False,
                error_message=f"{name} must be positive, got {number}",
            )
        return ValidationResult(is_valid=True, normalized_value=number)

    @staticmethod
    def positive_int(value: Any, name: str) -> ValidationResult:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return ValidationResult(
                is_valid=False,
                error_message=f"{name} must be an integer, got {value!r}",
            )
        if int(value) != value:
            return ValidationResult(
                is_valid=False,
                error_message=f"{name} must be an integer, got {value!r}",
            )
        if value < 1:
            return ValidationResult(
                is_valid=False,
                error_message=f"{name} must be at least 1, got {value}",
            )
        return ValidationResult(is_valid=True, normalized_value=int(value))

    @staticmethod
    def open_unit_interval(value: Any, name: str) -> ValidationResult:
        try:
            number = float(value)
        except (TypeError, ValueError):
            return ValidationResult(
                is_valid=False,
                error_message=f"{name} must be a number, got {value!r}",
            )
        if not 0.0 < number < 1.0:
            return ValidationResult(
                is_valid=False,
                error_message=f"{name} must lie strictly between 0 and 1, got {number}",
            )
        return ValidationResult(is_valid=True, normalized_value=number)

    @staticmethod
    def closed_unit_interval(value: Any, name: str) -> ValidationResult:
        try:
            number = float(value)
        except (TypeError, ValueError):
            return ValidationResult(
                is_valid=False,
                error_message=f"{name} must be a number, got {value!r}",
            )
        if not 0.0 <= number <= 1.0:
            return ValidationResult(
                is_valid=False,
                error_message=f"{name} must lie in [0, 1], got {number}",
            )
        return ValidationResult(is_valid=True, normalized_value=number)


class MeshValidator:
    @staticmethod
    def nested(
        coarse_shape: tuple[int, int], fine_shape: tuple[int, int]
    ) -> ValidationResult:
        """Check that every coarse element is tiled by an integral block of fine elements."""
        ratios = []
        for coarse_n, fine_n, axis in zip(coarse_shape, fine_shape, ("x", "y")):
            if coarse_n < 1 or fine_n < 1:
                return ValidationResult(
                    is_valid=False,
                    error_message=f"element counts must be positive along {axis}",
                )
            if fine_n % coarse_n != 0:
                return ValidationResult(
                    is_valid=False,
                    error_message=(
                        f"meshes are not nested along {axis}: {fine_n} fine elements "
                        f"are not divisible by {coarse_n} coarse elements"
                    ),
                )
            ratios.append(fine_n // coarse_n)
        return ValidationResult(is_valid=True, normalized_value=tuple(ratios))


class ConfigValidator:
    @staticmethod
    def collect(results: list[ValidationResult]) -> ValidationResult:
        problems = [r.error_message for r in results if not r.is_valid and r.error_message]
        if problems:
            return ValidationResult(is_valid=False, error_message="; ".join(problems))
        return ValidationResult(is_valid=True)


__all__ = [
    "ValidationResult",
    "RangeValidator",
    "MeshValidator",
    "ConfigValidator",
]
