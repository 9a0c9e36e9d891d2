"""Optional numba acceleration.

Set ``SERFSIM_NO_NUMBA=1`` (or leave numba uninstalled) to route every kernel
to its vectorised numpy twin in ``kernels``.
"""

from __future__ import annotations

import functools
import os

_DISABLED = os.environ.get("SERFSIM_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("disabled by SERFSIM_NO_NUMBA")
    from numba import njit as _numba_njit

    NUMBA_OK = True
except ImportError:
    NUMBA_OK = False
    _numba_njit = None


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise a no-op decorator."""
    def wrap(f):
        if NUMBA_OK:
            return _numba_njit(cache=kwargs.pop("cache", True), **kwargs)(f)

        @functools.wraps(f)
        def wrapper(*a, **kw):
            return f(*a, **kw)

        wrapper.py_func = f
        return wrapper

    if args and callable(args[0]):
        return wrap(args[0])
    return wrap


def backend() -> str:
    return "numba" if NUMBA_OK else "numpy"
