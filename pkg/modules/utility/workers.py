"""
Replica pool

Replicas are independent; results come back in input order so merged output
does not depend on the number of workers.
"""

import logging
from multiprocessing import Pool
from typing import Callable, List, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


def run_replicas(fn: Callable[[T], R], items: Sequence[T], workers: int = 1,
                 chunksize: int = 0) -> List[R]:
    """
    Map fn over items, in a process pool when workers > 1

    Args:
        fn: Picklable top-level callable (or functools.partial of one)
        items: Work items, usually replica indices
        workers: Number of processes
        chunksize: Items per task; 0 picks a size giving ~4 tasks per worker

    Returns:
        Results ordered like items
    """
    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]

    if chunksize <= 0:
        chunksize = max(1, len(items) // (workers * 4))

    logger.debug(f"Running {len(items)} replicas on {workers} workers (chunksize={chunksize})")
    with Pool(processes=workers) as pool:
        return pool.map(fn, items, chunksize=chunksize)
