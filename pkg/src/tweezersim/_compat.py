"""Numba backend selection.

Hot kernels are compiled with numba when available. Setting the
environment variable ``TWEEZERSIM_BACKEND=numpy`` (before import) forces
the pure-Python/numpy fallback path; ``benchmarks/bench_backends.py``
compares the two.
"""

import os

_ENV_VAR = "TWEEZERSIM_BACKEND"

try:
    import numba as _numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag instead
    _numba = None
    _HAVE_NUMBA = False


def _requested_backend() -> str:
    val = os.environ.get(_ENV_VAR, "numba").strip().lower()
    if val not in ("numba", "numpy"):
        raise RuntimeError(f"{_ENV_VAR} must be 'numba' or 'numpy', got {val!r}")
    return val


USE_NUMBA = _HAVE_NUMBA and _requested_backend() == "numba"
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """numba.njit when the numba backend is active, identity otherwise.

    fastmath stays off so both backends produce bit-identical results.
    """
    if USE_NUMBA:
        return _numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda func: func
