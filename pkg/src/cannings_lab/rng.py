"""Counter-based random streams.

Every replicate draws from its own generator keyed by ``(seed, tag, index)``,
so results never depend on how replicates are scheduled across workers.
"""
from __future__ import annotations

import zlib
from functools import partial
from typing import Callable, Iterable

import numpy as np


def _key_part(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    part = int(part)
    if part < 0:
        raise ValueError("stream key components must be non-negative")
    return part


def stream(seed: int, *key) -> np.random.Generator:
    """Return the generator for ``seed`` at counter position ``key``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_part(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _call_with_stream(fn, seed, tag, index):
    return fn(stream(seed, tag, index))


def run_replicates(fn: Callable[[np.random.Generator], object], seed: int, tag: str,
                   count: int, mapper: Callable = map) -> list:
    """Evaluate ``fn(stream(seed, tag, i))`` for ``i < count`` in index order.

    ``mapper`` has the signature of the builtin ``map``; pass a process-pool
    map to fan out. ``fn`` must then be picklable.
    """
    job = partial(_call_with_stream, fn, seed, tag)
    return list(mapper(job, range(count)))


class ParallelMap:
    """Order-preserving process-pool ``map`` replacement."""

    def __init__(self, workers: int):
        self.workers = max(1, int(workers))

    def __call__(self, fn, iterable: Iterable):
        items = list(iterable)
        if self.workers == 1 or len(items) < 2:
            return [fn(x) for x in items]
        from concurrent.futures import ProcessPoolExecutor

        chunk = max(1, len(items) // (self.workers * 8))
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(fn, items, chunksize=chunk))
