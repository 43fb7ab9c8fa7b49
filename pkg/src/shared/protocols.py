"""Protocol definitions for dependency injection and type safety."""

from __future__ import annotations

from typing import Protocol

import numpy as np


class ForwardModel(Protocol):
    """Map from latent log-conductivities to coarse nodal temperatures.

    ``solve_batch`` takes an ``(m, n_latent)`` array and returns ``(m, n_nodes)``;
    rows whose solve fails must come back as non-finite values rather than raise.
    """

    n_latent: int
    n_nodes: int

    def solve_batch(self, z: np.ndarray) -> np.ndarray: ...
