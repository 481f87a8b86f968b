"""Backend selection for the hot kernels.

Set ``LYAPNET_DISABLE_NUMBA=1`` to run the pure-numpy fallback path. The
flag is read once at import time.
"""
import os

_FLAG = os.environ.get("LYAPNET_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = _FLAG not in ("1", "true", "yes", "on")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

if not USE_NUMBA:

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


BACKEND = "numba" if USE_NUMBA else "numpy"
