"""Selects the compiled SGD kernels when available, else the NumPy fallback.

Set ``FAIRFEDLAB_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py as fallback

compiled = None
if os.environ.get("FAIRFEDLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled  # type: ignore[no-redef]
    except ImportError:  # extension not built
        compiled = None

kernels = compiled if compiled is not None else fallback
BACKEND = "compiled" if compiled is not None else "python"
