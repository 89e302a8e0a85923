"""Optional numba acceleration.

Every compiled kernel in ``kernels`` has a vectorised numpy twin.  Setting
``WIGNERAVG_DISABLE_NUMBA=1`` before import selects the numpy twins; they are
also selected when numba cannot be imported.
"""
import os

DISABLED = os.environ.get("WIGNERAVG_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    from numba import njit as _njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False
    _njit = None

USE_NUMBA = HAVE_NUMBA and not DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` if numba is importable, identity decorator otherwise."""
    if HAVE_NUMBA:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
