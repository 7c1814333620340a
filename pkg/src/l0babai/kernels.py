"""Batch detection kernels with a compiled backend when available.

Set ``L0BABAI_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from . import _fallback

try:
    if os.environ.get("L0BABAI_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _kernels as _impl

    BACKEND = "compiled"
except ImportError:
    _impl = _fallback
    BACKEND = "python"

MODE_REGULARIZED = _fallback.MODE_REGULARIZED
MODE_ORDINARY = _fallback.MODE_ORDINARY

babai_batch = _impl.babai_batch
count_successes = _impl.count_successes
