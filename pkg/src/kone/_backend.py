"""Kernel backend selection.

The compiled extension is used when it imports; setting ``KONE_PURE_PYTHON=1``
forces the numpy fallback. Both expose the same functions.
"""
import os

from . import _fallback as fallback

compiled = None
if os.environ.get("KONE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled
    except ImportError:  # extension not built
        compiled = None

kernels = compiled if compiled is not None else fallback
NAME = "compiled" if compiled is not None else "fallback"


def get(name: str | None = None):
    """Return a backend module by name (``"compiled"``/``"fallback"``), or the active one."""
    if name is None:
        return kernels
    if name == "fallback":
        return fallback
    if name == "compiled":
        if compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return compiled
    raise ValueError(f"unknown backend {name!r}")
