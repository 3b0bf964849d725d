"""Optional numba acceleration.

Hot kernels are written once in a numba-compatible subset of numpy and
decorated with :func:`njit`.  Setting ``SIVCPT_NUMBA=0`` in the environment
(before import) disables compilation, so the same source runs as plain
numpy/Python; that is also what happens when numba is not installed.
"""

from __future__ import annotations

import os

_DISABLED = {"0", "false", "off", "no"}

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and os.environ.get("SIVCPT_NUMBA", "1").strip().lower() not in _DISABLED


def njit(fn=None, **options):
    """``numba.njit`` when acceleration is enabled, identity otherwise.

    The undecorated function stays reachable as ``.py_func`` either way.
    """
    options.setdefault("cache", True)

    def wrap(f):
        if USE_NUMBA:
            return numba.njit(**options)(f)
        f.py_func = f
        return f

    if fn is None:
        return wrap
    return wrap(fn)
