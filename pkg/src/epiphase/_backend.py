"""Select the rolling-window kernel implementation at import time.

The compiled ``_kernels`` extension is preferred; setting the environment
variable ``EPIPHASE_PURE_PYTHON=1`` (or failing to build the extension)
selects the numpy fallback in ``_pykernels``.
"""

import os

from . import _pykernels

try:
    if os.environ.get("EPIPHASE_PURE_PYTHON"):
        raise ImportError("pure-Python kernels requested")
    from . import _kernels as kernels
except ImportError:
    kernels = _pykernels

BACKEND = "cython" if kernels is not _pykernels else "python"


def compiled():
    """The compiled module, or None when it is not available."""
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels
