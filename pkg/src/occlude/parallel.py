"""Order-preserving process-pool map.

Results are returned in input order, so any reduction over them is identical
whatever the worker count. ``OCCLUDE_THREADS`` caps the number of workers.
"""

import os
from concurrent.futures import ProcessPoolExecutor


def worker_count(requested=None):
    n = requested if requested is not None else 1
    cap = os.environ.get("OCCLUDE_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return max(1, n)


def parallel_map(fn, items, workers=1, chunksize=None):
    items = list(items)
    n = worker_count(workers)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    if chunksize is None:
        chunksize = max(1, len(items) // (4 * n))
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
