"""
Parallel helpers for per-point work over the reference set.

Splits index ranges into contiguous chunks and runs them on a joblib thread
pool; results are concatenated in index order so output never depends on the
number of workers.
"""

import logging
from typing import Callable, List, TypeVar

from joblib import Parallel, delayed

logger = logging.getLogger(__name__)

T = TypeVar('T')

# Below this many items the pool overhead dominates
MIN_ITEMS_PER_WORKER = 256

def chunk_bounds(n_items: int, n_chunks: int) -> List[tuple]:
    """Contiguous [start, stop) bounds covering range(n_items)."""
    n_chunks = max(1, min(n_chunks, n_items))
    step, extra = divmod(n_items, n_chunks)
    bounds = []
    start = 0
    for k in range(n_chunks):
        stop = start + step + (1 if k < extra else 0)
        bounds.append((start, stop))
        start = stop
    return bounds

def map_index_chunks(
    func: Callable[[int, int], List[T]],
    n_items: int,
    threads: int = 1
) -> List[T]:
    """Apply func(start, stop) over chunks of range(n_items) and concatenate."""
    if n_items == 0:
        return []
    workers = max(1, min(threads, n_items // MIN_ITEMS_PER_WORKER))
    if workers == 1:
        return func(0, n_items)

    parts = Parallel(n_jobs=workers, prefer="threads")(
        delayed(func)(start, stop) for start, stop in chunk_bounds(n_items, workers)
    )
    out: List[T] = []
    for part in parts:
        out.extend(part)
    return out
