"""Thread pool helper honoring the PID_DECOMP_THREADS cap (0 or unset = auto)."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

ENV_VAR = "PID_DECOMP_THREADS"


def worker_count() -> int:
    raw = os.environ.get(ENV_VAR, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = min(8, os.cpu_count() or 1)
    return n


def pmap(fn: Callable[[T], R], items: Sequence[T], min_batch: int = 64) -> list[R]:
    """Order-preserving map; small inputs run inline."""
    workers = worker_count()
    if workers == 1 or len(items) < min_batch:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
