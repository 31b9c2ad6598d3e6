"""Kernel backend selection.

Hot loops are written once against plain numpy and compiled with numba when it
is available. Set ``HESSAE_BACKEND=numpy`` to run the uncompiled path instead
(the same source, interpreted), which is useful for debugging and for the
benchmark in ``benchmarks/bench_backends.py``. Kernels whose loops would be
hopeless when interpreted (the kNN search) have a vectorised numpy twin that
callers pick via ``USE_NUMBA``.
"""
import os

_requested = os.environ.get("HESSAE_BACKEND", "numba").strip().lower()

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _numba = None

USE_NUMBA = _requested != "numpy" and _numba is not None
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when the numba backend is active, identity otherwise."""
    if USE_NUMBA:
        kwargs.setdefault("cache", True)
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn
