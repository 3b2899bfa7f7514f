"""Seeded random streams and replica-level parallelism.

Every stochastic routine splits its work into numbered replicas (a replica
is one family batch, one tau2 run, one path batch...).  Replica ``i`` draws
from ``Generator(PCG64(SeedSequence([seed, i])))``, so results depend only on
``(seed, i)`` and never on how many worker processes are used.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Sequence, Tuple

import numpy as np

THREADS_ENV = "SPATIAL_MORAN_THREADS"


def replica_rng(seed: int, index: int) -> np.random.Generator:
    if seed < 0 or index < 0:
        raise ValueError("seed and replica index must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(index)])))


def default_threads() -> int:
    value = os.environ.get(THREADS_ENV)
    if not value:
        return 1
    n = int(value)
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be >= 1, got {value!r}")
    return n


def chunks(total: int, size: int) -> List[Tuple[int, int]]:
    """Split ``total`` items into ``(replica_index, count)`` pieces of ``size``."""
    out = []
    start = 0
    index = 0
    while start < total:
        n = min(size, total - start)
        out.append((index, n))
        start += n
        index += 1
    return out


def map_replicas(fn: Callable, tasks: Sequence, threads: int | None = None) -> list:
    """``[fn(t) for t in tasks]``, optionally across processes, in task order."""
    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def concat(parts: Iterable[np.ndarray]) -> np.ndarray:
    parts = list(parts)
    return np.concatenate(parts) if parts else np.empty(0)
