"""Optional numba acceleration.

Set ``LEDGERDYN_DISABLE_NUMBA=1`` before import to force the pure numpy/Python
kernels (useful for debugging and for comparing the two paths).
"""
import os

try:
    from numba import njit as _njit
    numba_installed = True
except ImportError:  # pragma: no cover
    _njit = None
    numba_installed = False

force_no_numba = os.environ.get("LEDGERDYN_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

USE_NUMBA = numba_installed and not force_no_numba


def optional_njit(*args, **kwargs):
    def decorator(func):
        if USE_NUMBA:
            return _njit(*args, **kwargs)(func)
        return func
    return decorator


def jit_compile(func, **kwargs):
    """Compile ``func`` with numba regardless of the env flag; ``None`` when unavailable."""
    if not numba_installed:
        return None
    kwargs.setdefault("cache", True)  # on-disk cache; skips recompiling across processes
    return _njit(**kwargs)(func)
