"""Thread-count control for the numba kernels.

Kernels split work into fixed-size blocks and write per-item results to
separate slots, then reduce in index order, so the thread count changes
speed but never results.
"""

import logging
import os

import numba

log = logging.getLogger(__name__)

ENV_THREADS = "IMAX_THREADS"


def max_threads() -> int:
    return int(numba.config.NUMBA_NUM_THREADS)


def default_threads() -> int:
    raw = os.environ.get(ENV_THREADS)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", ENV_THREADS, raw)
    return max_threads()


def set_threads(n: int | None) -> int:
    """Set the kernel thread count, clamped to what numba was started with."""
    if n is None:
        n = default_threads()
    n = max(1, int(n))
    cap = max_threads()
    if n > cap:
        log.info("requested %d threads, numba allows %d", n, cap)
        n = cap
    numba.set_num_threads(n)
    return n


def get_threads() -> int:
    return int(numba.get_num_threads())
