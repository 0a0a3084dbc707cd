"""Kernel selection: the compiled extension when importable, numpy otherwise.

Set ``PPMUPDATE_BACKEND=python`` to force the numpy kernels.
"""
import logging
import os

logger = logging.getLogger(__name__)

_forced = os.environ.get("PPMUPDATE_BACKEND", "").lower()

if _forced == "python":
    from . import _fallback as kernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "compiled"
    except ImportError:  # extension not built
        if _forced == "compiled":
            raise
        logger.info("compiled forest kernels unavailable; using numpy fallback")
        from . import _fallback as kernels
        BACKEND = "python"


def get_kernels(name=None):
    """Return the kernel module for ``name`` ("compiled" or "python"), default: active one."""
    if name is None:
        return kernels
    if name == "python":
        from . import _fallback
        return _fallback
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def has_compiled() -> bool:
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return False
    return True
