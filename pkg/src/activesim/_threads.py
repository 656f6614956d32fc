"""Numba thread-pool setup.

Must run before numba is imported anywhere: the pool size is fixed at import
time, so we reserve up to 8 workers even on small machines to let callers
pick 1, 4 or 8 threads and check that results do not depend on it.
"""

import os
from contextlib import contextmanager

MAX_THREADS = max(8, os.cpu_count() or 1)

os.environ.setdefault("NUMBA_NUM_THREADS", str(MAX_THREADS))
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

import numba  # noqa: E402


def set_threads(n):
    """Set the worker count for all parallel kernels; returns the value applied."""
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


def get_threads():
    return numba.get_num_threads()


@contextmanager
def thread_scope(n=None):
    """Temporarily run parallel kernels on ``n`` threads (None keeps the current setting)."""
    if n is None:
        yield get_threads()
        return
    old = get_threads()
    try:
        yield set_threads(n)
    finally:
        numba.set_num_threads(old)
