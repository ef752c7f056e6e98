"""Thread-pool helpers for embarrassingly parallel path/replicate work.

Work is partitioned by item index and workers write only into disjoint
output slices, so results are identical for every worker count; the numba
kernels are compiled nogil and scale across threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def default_workers() -> int:
    env = os.environ.get("BBMFRONT_WORKERS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def map_blocks(fn, n_items: int, workers: int | None = None, min_block: int = 1024):
    """Call fn(i0, i1) over a partition of range(n_items)."""
    w = workers if workers else default_workers()
    if n_items <= 0:
        return
    block = max(min_block, -(-n_items // (4 * w)))
    spans = [(i, min(i + block, n_items)) for i in range(0, n_items, block)]
    if w == 1 or len(spans) == 1:
        for a, b in spans:
            fn(a, b)
        return
    with ThreadPoolExecutor(max_workers=w) as ex:
        list(ex.map(lambda s: fn(*s), spans))


def map_indices(fn, n_items: int, workers: int | None = None):
    """Call fn(i) for i in range(n_items) on a pool; returns nothing."""
    map_blocks(lambda a, b: [fn(i) for i in range(a, b)], n_items, workers, min_block=1)
