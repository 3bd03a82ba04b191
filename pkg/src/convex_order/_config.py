"""Runtime switches read from the environment.

``CONVEX_ORDER_DISABLE_NUMBA=1`` selects the pure-numpy kernels even when numba
is importable. ``CONVEX_ORDER_THREADS`` caps the worker count used for path
simulation and per-direction geometry.
"""
import os

_FALSY = {"", "0", "false", "no", "off"}


def _flag(name):
    return os.environ.get(name, "").strip().lower() not in _FALSY


def numba_requested():
    if _flag("CONVEX_ORDER_DISABLE_NUMBA"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USE_NUMBA = numba_requested()


def worker_count():
    raw = os.environ.get("CONVEX_ORDER_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            n = 0
        if n > 0:
            return n
    return os.cpu_count() or 1
