"""Backend selection for the numeric kernels.

The compiled extension is used when it imports; setting
``RANKSAMPLE_PURE_PYTHON=1`` forces the pure-Python fallback. Both
backends return bit-identical results.
"""
from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("RANKSAMPLE_PURE_PYTHON") == "1":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

exact_sum = _impl.exact_sum
exact_sum_sq_ratio = _impl.exact_sum_sq_ratio
row_stats = _impl.row_stats
inverse_cdf = _impl.inverse_cdf

__all__ = ["BACKEND", "exact_sum", "exact_sum_sq_ratio", "row_stats", "inverse_cdf"]
