"""
parallel.py

Chunked parallel map over leaf index ranges.

Work is cut into fixed-size chunks in leaf order, dispatched to a thread pool
(numpy releases the GIL inside its kernels) and reassembled in chunk order, so
results never depend on the worker count.

Usage:
    from parallel import chunked_map
    out = chunked_map(lambda lo, hi: heavy(idx[lo:hi]), len(idx), workers=4)
"""
from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_CHUNK = 4096
_workers = 1


def set_workers(count):
    global _workers
    _workers = max(1, int(count))


def chunk_bounds(total, chunk=DEFAULT_CHUNK):
    return [(lo, min(lo + chunk, total)) for lo in range(0, total, chunk)]


def chunked_map(func, total, workers=None, chunk=DEFAULT_CHUNK):
    """
    Calls func(lo, hi) on consecutive ranges covering [0, total) and returns
    the list of results in range order.
    """
    bounds = chunk_bounds(total, chunk)
    workers = _workers if workers is None else max(1, int(workers))
    if workers == 1 or len(bounds) <= 1:
        return [func(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(func, lo, hi) for lo, hi in bounds]
        return [f.result() for f in futures]


def concat(parts, empty_shape=(0,), dtype=float):
    """np.concatenate that tolerates an empty list of chunk results."""
    if not parts:
        return np.zeros(empty_shape, dtype=dtype)
    return np.concatenate(parts, axis=0)
