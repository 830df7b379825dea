"""Deterministic work chunking.

Chunk boundaries depend only on the problem size and a fixed chunk size,
never on the worker count, so results are identical no matter how many
threads execute the chunks (each chunk writes to a disjoint slice or is
merged with an associative, totally ordered reduction).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, Tuple, TypeVar

T = TypeVar("T")


def chunk_ranges(total: int, chunk_size: int) -> List[Tuple[int, int]]:
    """Half-open index ranges covering [0, total) in fixed-size chunks."""
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    return [(lo, min(lo + chunk_size, total)) for lo in range(0, total, chunk_size)]


def run_chunks(fn: Callable[[Tuple[int, int]], T], ranges: Sequence[Tuple[int, int]],
               workers: int = 1) -> List[T]:
    """Apply ``fn`` to every range, results in range order.

    ``workers`` only controls the thread pool size; with 1 the chunks run in
    the calling thread.
    """
    if workers <= 1 or len(ranges) <= 1:
        return [fn(r) for r in ranges]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, ranges))
