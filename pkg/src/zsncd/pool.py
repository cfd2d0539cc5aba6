"""Deterministic chunked parallelism.

Work is split into fixed-size chunks whose boundaries do not depend on the
thread count, and results are reduced in chunk order, so any `threads` value
produces bit-identical output. ZSNCD_THREADS is the environment fallback for
CLI and library callers that pass threads=None.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")

ENV_THREADS = "ZSNCD_THREADS"


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get(ENV_THREADS, "1"))
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    return threads


def chunk_ranges(n: int, chunk: int) -> list[tuple[int, int]]:
    return [(i, min(i + chunk, n)) for i in range(0, n, chunk)]


def map_chunks(fn: Callable[[int, int], T], n: int, chunk: int,
               threads: int | None) -> list[T]:
    """Apply fn(start, stop) to every chunk; results come back in chunk order."""
    threads = resolve_threads(threads)
    ranges = chunk_ranges(n, chunk)
    if threads == 1 or len(ranges) <= 1:
        return [fn(a, b) for a, b in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: fn(*r), ranges))
