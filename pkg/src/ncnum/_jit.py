"""Optional numba acceleration.

``njit`` compiles with numba when it is importable and otherwise returns the
function untouched, so every kernel also runs as plain Python.
"""

from __future__ import annotations

try:
    import numba as _numba
except ImportError:  # pragma: no cover - exercised only without numba
    _numba = None

HAVE_NUMBA = _numba is not None


def njit(*args, **kwargs):
    if _numba is not None:
        kwargs.setdefault("cache", True)
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def py_func(f):
    """The pure-Python body of a kernel, compiled or not."""
    return getattr(f, "py_func", f)
