"""Kernel backend selection.

Hot inner loops (thinning, distance transform, matrix-free FE apply) are
compiled with numba by default.  Setting the environment variable
``DEHOMOG_PURE_NUMPY=1`` before import selects the pure numpy/scipy
fallback path instead; ``benchmarks/bench_backends.py`` compares the two.
"""

from __future__ import annotations

import os

_FLAG = os.environ.get("DEHOMOG_PURE_NUMPY", "0").strip().lower()
USE_NUMBA = _FLAG not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

if not USE_NUMBA:
    def njit(*args, **kwargs):
        """No-op stand-in for numba.njit on the fallback path."""
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
