"""Kernel backend selection.

The compiled extension is used when it imports; setting the environment
variable MAZPOT_PURE=1 forces the numpy/scipy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("MAZPOT_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py


def dijkstra8(*args):
    return _impl.dijkstra8(*args)


def walk(*args):
    return _impl.walk(*args)


def use(backend):
    """Switch backend at runtime ('cython' or 'python'); returns the previous one."""
    global _impl, BACKEND
    prev = BACKEND
    if backend == "python":
        _impl, BACKEND = _kernels_py, "python"
    elif backend == "cython":
        from . import _ckernels

        _impl, BACKEND = _ckernels, "cython"
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return prev
