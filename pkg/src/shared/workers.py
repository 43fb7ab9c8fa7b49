"""Thread-pool helpers that keep results independent of the worker count."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """Apply ``fn`` to every item and return results in input order."""
    materialized = list(items)
    if threads <= 1 or len(materialized) <= 1:
        return [fn(item) for item in materialized]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, materialized))


def child_seeds(seed: int, count: int) -> list[np.random.SeedSequence]:
    """Independent RNG streams indexed by position, never by worker."""
    return np.random.SeedSequence(seed).spawn(count)


def indexed_seed(seed: int, index: int) -> int:
    """A reproducible 32-bit integer seed for item ``index`` of a run seeded with ``seed``."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


__all__ = ["parallel_map", "child_seeds", "indexed_seed"]
