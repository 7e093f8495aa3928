"""Numba/numpy backend selection.

The hot kernels (path simulation, policy improvement, line-Jacobi sweeps)
exist in two flavors: scalar loops compiled with numba.njit, and a
vectorized pure-numpy fallback. Both compute the same IEEE operations in
the same per-element order, so results are bit-identical; only speed
differs. Selection:

  * HWMRUIN_DISABLE_NUMBA=1 in the environment forces the numpy path.
  * If numba is not importable the numpy path is used silently.

`using_numba()` reports the active backend; `set_worker_threads(n)` caps
the numba thread pool (a no-op on the numpy path, which is single
threaded by design).
"""

from __future__ import annotations

import os

_DISABLED = os.environ.get("HWMRUIN_DISABLE_NUMBA", "").strip() in ("1", "true", "yes")

if not _DISABLED:
    try:
        import numba
        from numba import njit, prange

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - exercised only without numba installed
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

if not HAVE_NUMBA:
    def njit(*args, **kwargs):  # type: ignore[misc]
        """Decorator stub so kernel modules import cleanly without numba."""
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap

    def prange(*args):  # type: ignore[misc]
        return range(*args)


def using_numba() -> bool:
    return HAVE_NUMBA


def backend_name() -> str:
    return "numba" if HAVE_NUMBA else "numpy"


def numba_version() -> str | None:
    return numba.__version__ if HAVE_NUMBA else None


def set_worker_threads(n: int) -> int:
    """Cap the numba thread pool at n; returns the thread count in effect.

    Estimates are independent of the thread count by construction (per-path
    RNG substreams, pairwise reductions), so this only affects speed.
    """
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    if not HAVE_NUMBA:
        return 1
    cap = numba.config.NUMBA_NUM_THREADS
    eff = min(n, cap)
    numba.set_num_threads(eff)
    return eff
