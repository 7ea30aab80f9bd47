"""Order-preserving map with optional thread workers.

Per-item work must be deterministic given its inputs; results are collected
by index, so output is bit-identical at any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence


def parallel_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
