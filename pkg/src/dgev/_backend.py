"""Select the compiled SMC kernel when importable, else the numpy fallback.

Set ``DGEV_BACKEND=python`` to force the fallback.
"""
import os

from dgev import _csmc_py

BACKEND = "python"
csmc_kernel = _csmc_py.csmc_kernel

if os.environ.get("DGEV_BACKEND", "").lower() != "python":
    try:
        from dgev import _csmc
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        csmc_kernel = _csmc.csmc_kernel


def get_kernel(name=None):
    """Kernel by name ('cython' or 'python'); None means the active default."""
    if name is None:
        return csmc_kernel
    if name == "python":
        return _csmc_py.csmc_kernel
    if name == "cython":
        from dgev import _csmc
        return _csmc.csmc_kernel
    raise ValueError(f"unknown backend {name!r}")
