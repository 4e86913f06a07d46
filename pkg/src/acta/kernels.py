"""Kernel backend selection.

The compiled extension is preferred; the numpy/scipy fallback is used when it
is missing or when ACTA_PURE_PYTHON=1 is set. Both expose the same functions
with identical semantics.
"""

import os

from . import _kernels_py

if os.environ.get("ACTA_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels_cy as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

pink_filter = _impl.pink_filter
polyline_min_dist = _impl.polyline_min_dist
count_peaks = _impl.count_peaks
