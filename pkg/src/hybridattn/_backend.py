"""Kernel backend selection.

Set ``HYBRIDATTN_BACKEND=numpy`` to force the pure-numpy kernels; the default
is ``numba`` whenever numba imports cleanly.
"""

import os

BACKEND_ENV = "HYBRIDATTN_BACKEND"

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def _resolve():
    wanted = os.environ.get(BACKEND_ENV, "numba").strip().lower()
    if wanted not in ("numba", "numpy"):
        raise ValueError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {wanted!r}")
    if wanted == "numba" and not HAS_NUMBA:
        return "numpy"
    return wanted


BACKEND = _resolve()


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    The numba variants are always compiled if numba exists so both paths stay
    testable in one process; BACKEND only picks which one is exported.
    """
    if not HAS_NUMBA:
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)
