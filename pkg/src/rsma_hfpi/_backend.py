"""Pick the inner-loop kernels at import.

The compiled extension is used when it imports; set ``RSMA_HFPI_BACKEND=python``
to force the numpy fallback.
"""
import os

from . import _kernels_py

_kernels_c = None
if os.environ.get("RSMA_HFPI_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _kernels_c
    except ImportError:  # extension not built
        _kernels_c = None

kernels = _kernels_c if _kernels_c is not None else _kernels_py
BACKEND = kernels.BACKEND


def get_kernels(name=None):
    """Return a kernel module by name ("cython", "python") or the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _kernels_c is None:
            raise ImportError("compiled kernels unavailable")
        return _kernels_c
    raise ValueError(f"unknown backend {name!r}")


def available():
    return ["python"] + (["cython"] if _kernels_c is not None else [])
