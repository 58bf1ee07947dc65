from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np
from loguru import logger

T = TypeVar("T")
R = TypeVar("R")


def create_executor(workers: int) -> ThreadPoolExecutor:
    """Create the worker pool used for data-parallel numerical work."""
    return ThreadPoolExecutor(max_workers=max(1, workers), thread_name_prefix="suv-plda")


def create_rng(*key: int) -> np.random.Generator:
    """Generator seeded from an integer key, e.g. (seed, speaker, session)."""
    return np.random.default_rng([int(k) for k in key])


def chunk_ranges(total: int, chunk_size: int) -> list[tuple[int, int]]:
    return [(start, min(start + chunk_size, total)) for start in range(0, total, chunk_size)]


def map_ordered(
    fn: Callable[[T], R],
    items: Sequence[T] | Iterable[T],
    workers: int,
) -> list[R]:
    """
    Apply `fn` to every item, in a pool when workers > 1.

    Results come back in submission order, so output never depends on the
    worker count.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    logger.debug(f"Dispatching {len(items)} tasks to {workers} workers")
    with create_executor(workers) as executor:
        return list(executor.map(fn, items))
