"""Thread pool for independent per-item and per-user computations."""

from __future__ import annotations

import logging
import sys
from typing import Callable, Iterable, List, Optional, TypeVar

from joblib import Parallel, delayed
from tqdm import tqdm

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def run_parallel(fn: Callable[[T], R], items: Iterable[T], jobs: int = 1, desc: Optional[str] = None) -> List[R]:
    """Apply ``fn`` to every item; results come back in input order whatever ``jobs`` is.

    With ``desc`` a progress bar is drawn on stderr (only when it is a terminal).
    """
    items = list(items)
    iterable = items
    if desc is not None:
        iterable = tqdm(items, desc=desc, file=sys.stderr, disable=not sys.stderr.isatty(), leave=False)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in iterable]
    logger.debug(f"Dispatching {len(items)} tasks to {jobs} threads")
    return Parallel(n_jobs=jobs, prefer="threads")(delayed(fn)(item) for item in iterable)
