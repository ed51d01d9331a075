"""Numba acceleration toggle.

Hot kernels (simplex point-location walk, Jacobi eigenvalue sweeps) are
written once in nopython-compatible numpy and compiled with numba when
available.  Set PRECISIONFIT_NO_NUMBA=1 to force the pure-numpy fallback,
e.g. for debugging or for the benchmark in benchmarks/accel_bench.py.
"""

import os

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and os.environ.get("PRECISIONFIT_NO_NUMBA", "0").lower() not in (
    "1",
    "true",
    "yes",
)


def maybe_jit(fn):
    """Compile fn with numba when enabled, otherwise return it unchanged."""
    if USE_NUMBA:
        return _njit(cache=True)(fn)
    return fn
