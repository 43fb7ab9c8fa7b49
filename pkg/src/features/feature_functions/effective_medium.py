"""Closed-form and implicit effective-medium estimates for two-phase media.

``mga`` and ``sca`` broadcast over numpy arrays; ``dem`` solves its implicit
equation per value with a bracketed root finder and is wrapped by ``dem_array``.
"""

from __future__ import annotations

import numpy as np
from scipy import optimize

from src.shared.errors import DomainError, NumericError

DEM_RTOL = 1e-12
BOUNDS_RTOL = 1e-12


def _check(lambda_mat, lambda_inc, phi_inc) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lm = np.asarray(lambda_mat, dtype=float)
    li = np.asarray(lambda_inc, dtype=float)
    phi = np.asarray(phi_inc, dtype=float)
    if np.any(~(lm > 0)) or np.any(~(li > 0)):
        raise DomainError("Phase conductivities must be positive")
    if np.any(~((phi >= 0.0) & (phi <= 1.0))):
        raise DomainError("Inclusion volume fraction must lie in [0, 1]")
    return lm, li, phi


def check_bounds(value: np.ndarray, lm: np.ndarray, li: np.ndarray, formula: str) -> np.ndarray:
    """Reject estimates outside the phase conductivities; only rounding excess is trimmed."""
    lo, hi = np.minimum(lm, li), np.maximum(lm, li)
    slack = BOUNDS_RTOL * hi
    outside = (value < lo - slack) | (value > hi + slack) | ~np.isfinite(value)
    if np.any(outside):
        raise NumericError(
            f"{formula} estimate left the phase bounds",
            context={"values": np.asarray(value)[outside].tolist()},
        )
    return np.clip(value, lo, hi)


def mga(lambda_mat, lambda_inc, phi_inc):
    """Maxwell-Garnett estimate with the matrix phase hosting dilute inclusions."""
    lm, li, phi = _check(lambda_mat, lambda_inc, phi_inc)
    delta = phi * (li - lm)
    denominator = lm + li - delta
    if np.any(denominator <= 0):
        raise NumericError("Maxwell-Garnett denominator is not positive")
    value = lm * (lm + li + delta) / denominator
    value = np.where(phi == 1.0, li, value)
    value = np.where((lm == li) | (phi == 0.0), lm, value)
    result = check_bounds(value, lm, li, "Maxwell-Garnett")
    return float(result) if result.ndim == 0 else result


def sca(lambda_mat, lambda_inc, phi_inc):
    """Self-consistent (Bruggeman) estimate; symmetric under swapping the phases."""
    lm, li, phi = _check(lambda_mat, lambda_inc, phi_inc)
    alpha = lm * (1.0 - 2.0 * phi) + li * (2.0 * phi - 1.0)
    value = 0.5 * (alpha + np.sqrt(alpha**2 + 4.0 * lm * li))
    value = np.where(phi == 1.0, li, value)
    value = np.where((lm == li) | (phi == 0.0), lm, value)
    result = check_bounds(value, lm, li, "Self-consistent")
    return float(result) if result.ndim == 0 else result


def dem_residual(value: float, lambda_mat: float, lambda_inc: float, phi_inc: float) -> float:
    return (lambda_inc - value) / (lambda_inc - lambda_mat) * np.sqrt(lambda_mat / value) - (1.0 - phi_inc)


def dem(lambda_mat: float, lambda_inc: float, phi_inc: float) -> float:
    """Differential effective medium: inclusions added incrementally to the matrix."""
    lm, li, phi = (float(v) for v in _check(lambda_mat, lambda_inc, phi_inc))
    if lm == li or phi == 0.0:
        return lm
    if phi == 1.0:
        return li
    lo, hi = min(lm, li), max(lm, li)
    try:
        root = optimize.brentq(
            dem_residual, lo, hi, args=(lm, li, phi), rtol=DEM_RTOL, xtol=1e-15 * lo, maxiter=500
        )
    except ValueError as e:
        raise NumericError(
            f"DEM root not bracketed for lambda_mat={lm}, lambda_inc={li}, phi_inc={phi}",
            original_error=e,
        ) from e
    return float(min(max(root, lo), hi))


dem_array = np.vectorize(dem, otypes=[float])


EFFECTIVE_MEDIUM_FORMULAS = {"mga": mga, "sca": sca, "dem": dem}


def phase_assignment(
    lambda_hi: float, lambda_lo: float, phi_hi: float, matrix: str = "auto"
) -> tuple[float, float, float]:
    """Return ``(lambda_mat, lambda_inc, phi_inc)`` for a two-phase cell set.

    ``auto`` makes the low phase the matrix while the high phase is the minority.
    """
    if matrix == "auto":
        matrix = "low" if phi_hi < 0.5 else "high"
    if matrix == "low":
        return lambda_lo, lambda_hi, phi_hi
    if matrix == "high":
        return lambda_hi, lambda_lo, 1.0 - phi_hi
    raise DomainError(f"Unknown matrix phase {matrix!r}; expected auto, low or high")


def effective_conductivity(
    formula: str, lambda_hi: float, lambda_lo: float, phi_hi: float, matrix: str = "auto"
) -> float:
    if formula not in EFFECTIVE_MEDIUM_FORMULAS:
        raise DomainError(f"Unknown effective-medium formula {formula!r}")
    lambda_mat, lambda_inc, phi_inc = phase_assignment(lambda_hi, lambda_lo, phi_hi, matrix)
    return float(EFFECTIVE_MEDIUM_FORMULAS[formula](lambda_mat, lambda_inc, phi_inc))
