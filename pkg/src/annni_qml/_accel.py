"""Numba dispatch.

Hot loops exist in two flavours: an ``@njit`` kernel and a pure-numpy
fallback.  Set ``ANNNI_QML_NUMBA=0`` to force the numpy path (or when numba
is missing).
"""
import os

_FLAG = os.environ.get("ANNNI_QML_NUMBA", "1").strip().lower()

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda func: func

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("0", "false", "no", "off")


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def select(numba_impl, numpy_impl):
    """Pick the implementation matching the active backend."""
    return numba_impl if USE_NUMBA else numpy_impl
