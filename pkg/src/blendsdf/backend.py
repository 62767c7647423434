"""Kernel backend selection.

Hot inner loops (grid interpolation, sphere tracing) exist twice: a numba
@njit version and a pure-numpy version with identical semantics. The active
backend is chosen once at import from the BLENDSDF_BACKEND environment
variable ("numba" or "numpy"); tests and the benchmark switch at runtime via
set_backend(). If numba is unavailable the numpy path is used silently.
"""

import os

try:
    import numba  # noqa: F401

    _HAVE_NUMBA = True
except ImportError:
    _HAVE_NUMBA = False

_VALID = ("numba", "numpy")
_backend = os.environ.get("BLENDSDF_BACKEND", "numba").lower()
if _backend not in _VALID:
    raise ValueError(f"BLENDSDF_BACKEND must be one of {_VALID}, got {_backend!r}")
if _backend == "numba" and not _HAVE_NUMBA:
    _backend = "numpy"


def have_numba():
    return _HAVE_NUMBA


def active_backend():
    """Name of the backend currently in use ("numba" or "numpy")."""
    return _backend


def set_backend(name):
    """Switch kernel implementations at runtime. Returns the previous name."""
    global _backend
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "numba" and not _HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    prev = _backend
    _backend = name
    return prev


def dispatch(numba_fn, numpy_fn):
    """Return a callable that routes to the active backend on every call."""

    def call(*args, **kwargs):
        if _backend == "numba":
            return numba_fn(*args, **kwargs)
        return numpy_fn(*args, **kwargs)

    return call
