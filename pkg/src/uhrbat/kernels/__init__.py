"""Hot-loop kernels with a numba backend and a pure-numpy fallback.

numba is used when importable.  Set ``UHRBAT_NO_NUMBA=1`` before import to
force the numpy path.  Callers pass validated, C-contiguous float64/int64
arrays; no checking happens here.
"""

from __future__ import annotations

import os
import warnings

from . import _numpy

_FALSY = {"", "0", "false", "no", "off"}


def _numba_disabled() -> bool:
    return os.environ.get("UHRBAT_NO_NUMBA", "").strip().lower() not in _FALSY


if _numba_disabled():
    impl = _numpy
    BACKEND = "numpy"
else:
    try:
        from . import _numba as impl
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - depends on environment
        warnings.warn("numba is not available, using the slower numpy kernels", RuntimeWarning)
        impl = _numpy
        BACKEND = "numpy"

column_mean = impl.column_mean
bilinear_gather = impl.bilinear_gather
region_score_stats = impl.region_score_stats
group_row_sums = impl.group_row_sums
sq_dist_to_point = impl.sq_dist_to_point
assign_nearest = impl.assign_nearest
patch_majority = impl.patch_majority

__all__ = [
    "BACKEND",
    "assign_nearest",
    "bilinear_gather",
    "column_mean",
    "group_row_sums",
    "patch_majority",
    "region_score_stats",
    "sq_dist_to_point",
]
