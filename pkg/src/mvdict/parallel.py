"""Thread-count resolution and an order-preserving parallel map."""

import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "MVDICT_THREADS"


def resolve_threads(threads=None):
    if threads is None:
        env = os.environ.get(ENV_THREADS)
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def pmap(fn, items, threads=1):
    """``[fn(x) for x in items]``, evaluated on up to ``threads`` threads."""
    items = list(items)
    threads = resolve_threads(threads)
    if threads == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
