"""Numba switch.

Set ``CFBENCH_DISABLE_NUMBA=1`` before importing :mod:`cfbench` to run every
kernel through its pure-numpy path. Both paths return bit-identical results.
"""
from __future__ import annotations

import os

_FLAG = "CFBENCH_DISABLE_NUMBA"


def _numba_requested() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() not in {"1", "true", "yes", "on"}


try:
    if not _numba_requested():
        raise ImportError("disabled by " + _FLAG)
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False


def njit(func):
    """``numba.njit(cache=True)`` when available, otherwise ``None``.

    Callers keep a numpy twin of every kernel and pick it when this returns
    ``None``.
    """
    if _njit is None:
        return None
    return _njit(cache=True)(func)


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
