"""Optional numba acceleration.

Hot loops are written once in plain Python/numpy style and compiled with
``numba.njit`` when numba is importable and ``RECMIX_DISABLE_NUMBA`` is not
set to a truthy value.  With the flag set every kernel runs as ordinary
Python, which is slow but useful for debugging and for cross-checking the
compiled path.
"""

import os

# the bundled TBB is too old for numba; skip the noisy probe
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

try:
    import numba
    from numba import njit as _njit, prange as _prange
    NUMBA_INSTALLED = True
except ImportError:  # pragma: no cover
    numba = None
    NUMBA_INSTALLED = False

_TRUTHY = {"1", "true", "yes", "on"}

USE_NUMBA = NUMBA_INSTALLED and os.environ.get("RECMIX_DISABLE_NUMBA", "").lower() not in _TRUTHY


def optional_njit(*args, **kwargs):
    """``numba.njit`` when acceleration is enabled, identity otherwise."""
    def decorator(func):
        if USE_NUMBA:
            return _njit(*args, **kwargs)(func)
        return func
    return decorator


if USE_NUMBA:
    prange = _prange
else:
    prange = range


def set_workers(n=None):
    """Set the numba thread count from ``n`` or ``RECMIX_WORKERS``."""
    if n is None:
        env = os.environ.get("RECMIX_WORKERS")
        n = int(env) if env else None
    if n is not None and USE_NUMBA:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
    return n
