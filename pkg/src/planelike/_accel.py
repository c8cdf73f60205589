"""Backend selection for the hot loops.

Numba is used when it imports and ``PLANELIKE_NO_NUMBA`` is unset (or "0").
Every jitted kernel has a pure-numpy twin, so the package works without numba
and the two paths can be cross-checked and benchmarked.
"""
import os
from contextlib import contextmanager

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAS_NUMBA = False

_FLAG = "PLANELIKE_NO_NUMBA"
_state = {"numba": HAS_NUMBA and os.environ.get(_FLAG, "0").lower() in ("", "0", "false", "no")}


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when numba is installed, identity otherwise."""
    kwargs.setdefault("cache", True)
    if not HAS_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


def use_numba() -> bool:
    return _state["numba"]


def set_backend(name: str) -> None:
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not installed")
    _state["numba"] = name == "numba"


def backend() -> str:
    return "numba" if _state["numba"] else "numpy"


@contextmanager
def backend_scope(name: str):
    old = backend()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(old)


def set_threads(n) -> None:
    if HAS_NUMBA and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
