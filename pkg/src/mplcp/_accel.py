"""Numba switch shared by the hot kernels.

Set ``MPLCP_NUMBA=0`` before import to force the pure-numpy code paths even
when numba is installed.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba ships in the dev environment
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("MPLCP_NUMBA", "1").strip().lower() not in {
    "0",
    "false",
    "no",
    "off",
}


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn
