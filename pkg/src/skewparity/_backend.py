"""Select the compiled kernels when available, else the pure-Python ones.

Set ``SKEWPARITY_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("SKEWPARITY_PURE_PYTHON", "") not in ("", "0"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        kernels = _kernels_py

BACKEND = "compiled" if kernels is not _kernels_py else "python"
