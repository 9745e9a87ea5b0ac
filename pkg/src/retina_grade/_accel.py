"""Optional numba acceleration.

Set ``RETINA_GRADE_NUMBA=0`` in the environment before import to force the
pure-numpy code paths. When numba is missing the numpy paths are used
regardless of the flag.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

HAVE_NUMBA = numba is not None
NUMBA_ENABLED = HAVE_NUMBA and os.environ.get("RETINA_GRADE_NUMBA", "1").strip().lower() not in (
    "0",
    "false",
    "no",
    "off",
)


def njit(f=None, **setting):
    """``numba.njit`` with caching and the GIL released; identity without numba."""
    setting.setdefault("cache", True)
    setting.setdefault("nogil", True)
    if numba is None:
        if f is None:
            return lambda f: f
        return f
    if f is None:
        return lambda f: numba.njit(f, **setting)
    return numba.njit(f, **setting)
