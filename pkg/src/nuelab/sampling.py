"""Seeded, order-independent sampling and deterministic parallel reduction.

Every Monte Carlo routine derives its randomness from (seed, *key) through
`substream`, so sample i is a pure function of the seed and its index and
results do not depend on how work is split across threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator for a (seed, key...) slot; pure function of its arguments."""
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(k) for k in key)))


def uniforms(seed: int, key: int, size: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    return substream(seed, key).uniform(lo, hi, size)


def chunks(total: int, chunk: int):
    """Yield (index, start, stop) triples covering range(total) in fixed order."""
    i = 0
    start = 0
    while start < total:
        stop = min(start + chunk, total)
        yield i, start, stop
        i += 1
        start = stop


def parallel_map(fn, items, threads: int = 1) -> list:
    """Map preserving input order; results identical for any thread count."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
