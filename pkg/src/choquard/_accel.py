"""Backend selection for the compiled kernels.

Numba is used when importable unless ``CHOQUARD_DISABLE_NUMBA`` is set to a
truthy value, in which case the vectorised numpy implementations run.
"""

from __future__ import annotations

import os

_FALSY = ("", "0", "false", "no", "off")


def numba_requested() -> bool:
    return os.environ.get("CHOQUARD_DISABLE_NUMBA", "").strip().lower() in _FALSY


try:
    import numba as _numba
except ImportError:  # pragma: no cover - exercised only without numba
    _numba = None

HAVE_NUMBA = _numba is not None


def use_numba() -> bool:
    return HAVE_NUMBA and numba_requested()


def njit(*args, **kwargs):
    """numba.njit when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f
