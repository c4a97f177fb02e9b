"""Kernel backend selection.

The compiled extension is used when importable; otherwise the pure-Python
reference is used. Set ``FOCKCOLLAPSE_PURE_PYTHON=1`` to force the fallback.
"""
import os

BACKEND = "python"

if os.environ.get("FOCKCOLLAPSE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._kernels import draw_categorical, ladder_matrix  # noqa: F401
        BACKEND = "cython"
    except ImportError:
        pass

if BACKEND == "python":
    from ._kernels_py import draw_categorical, ladder_matrix  # noqa: F401

__all__ = ["BACKEND", "draw_categorical", "ladder_matrix"]
