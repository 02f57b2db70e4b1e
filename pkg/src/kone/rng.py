"""Seed-derived random streams and the replica map.

Each replica ``i`` of a run with seed ``S`` draws from
``Generator(Philox(SeedSequence(S).spawn(n)[i]))``, so results do not depend
on how replicas are spread over workers.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def spawn(seed, n: int) -> list[np.random.Generator]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [make_rng(c) for c in ss.spawn(n)]


def workers() -> int:
    """Worker count from ``KONE_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("KONE_THREADS", "1")))
    except ValueError:
        return 1


def map_replicas(fn, seed, n: int, n_workers: int | None = None) -> list:
    """``[fn(i, rng_i) for i in range(n)]`` evaluated on a thread pool, in replica order."""
    rngs = spawn(seed, n)
    n_workers = n_workers or workers()
    if n_workers == 1 or n < 2:
        return [fn(i, r) for i, r in enumerate(rngs)]
    with ThreadPoolExecutor(n_workers) as pool:
        return list(pool.map(fn, range(n), rngs))
