"""Weighted LASSO by cyclic coordinate descent on a quadratic objective.

Minimizes ``0.5 theta' A theta - c' theta + sum_j penalty_j |theta_j|`` for a
symmetric positive semidefinite ``A``.
"""

from __future__ import annotations

import numpy as np

from src.shared.errors import ConvergenceError

DEFAULT_TOLERANCE = 1e-10
DEFAULT_MAX_SWEEPS = 10_000


def soft_threshold(value: np.ndarray | float, threshold: np.ndarray | float) -> np.ndarray | float:
    return np.sign(value) * np.maximum(np.abs(value) - threshold, 0.0)


def coordinate_descent(
    A: np.ndarray,
    c: np.ndarray,
    penalty: np.ndarray,
    theta0: np.ndarray | None = None,
    tol: float = DEFAULT_TOLERANCE,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> tuple[np.ndarray, int]:
    """Return the minimizer and the number of sweeps used.

    Stops once no coordinate moves by ``tol`` or more within one sweep.
    """
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    penalty = np.broadcast_to(np.asarray(penalty, dtype=float), c.shape)
    theta = np.zeros_like(c) if theta0 is None else np.array(theta0, dtype=float)
    diagonal = np.diag(A).copy()
    gradient = c - A @ theta

    for sweep in range(1, max_sweeps + 1):
        max_change = 0.0
        for j in range(theta.size):
            if diagonal[j] <= 0.0:
                new = 0.0
            else:
                rho = gradient[j] + diagonal[j] * theta[j]
                new = float(soft_threshold(rho, penalty[j])) / diagonal[j]
            change = new - theta[j]
            if change != 0.0:
                gradient -= A[:, j] * change
                theta[j] = new
                max_change = max(max_change, abs(change))
        if max_change < tol:
            return theta, sweep

    raise ConvergenceError(
        f"Coordinate descent did not converge in {max_sweeps} sweeps",
        last_iterate=theta,
        iterations=max_sweeps,
    )
