"""Kernel backend selection.

The compiled extension is used when it imports; ``SIZEFIELD_PURE_PYTHON=1``
forces the pure-Python kernels.
"""

import importlib
import logging
import os

logger = logging.getLogger(__name__)


def _load():
    if os.environ.get("SIZEFIELD_PURE_PYTHON", "") not in ("", "0"):
        from . import _pykernels

        return _pykernels
    try:
        from . import _kernels
    except ImportError:
        logger.debug("compiled kernels unavailable, using pure-Python fallback")
        from . import _pykernels

        return _pykernels
    return _kernels


kernels = _load()
BACKEND = kernels.NAME


def get(name: str):
    """Return a specific backend module by name ("cython" or "python")."""
    if name == "python":
        return importlib.import_module("sizefield._pykernels")
    if name == "cython":
        return importlib.import_module("sizefield._kernels")
    raise ValueError(f"unknown backend {name!r}")
