"""Thread-count resolution and an order-preserving parallel map."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("TIMFG_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def pmap(fn, items, threads: int | None = None) -> list:
    """``[fn(x) for x in items]``, evaluated on a thread pool when threads > 1.

    Output order matches input order, so reductions over the result are
    independent of the worker count.
    """
    items = list(items)
    n = resolve_threads(threads)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
