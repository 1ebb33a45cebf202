# workers.py
"""Thread pool used by sweeps, crosstalk ensembles and Monte Carlo batches."""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(func: Callable[[T], R], items: Iterable[T], threads: Optional[int] = 1) -> List[R]:
    """Apply `func` to every item; results come back in input order.

    threads <= 1 (or None) runs serially in the calling thread.
    """
    items = list(items)
    if not threads or threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    workers = min(int(threads), len(items))
    logger.debug(f"Running {len(items)} tasks on {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
