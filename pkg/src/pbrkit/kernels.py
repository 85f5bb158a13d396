"""Kernel dispatch: compiled core when available, numpy fallback otherwise.

Set ``PBRKIT_PURE_PYTHON=1`` to force the fallback (used by the test suite
to check that both backends agree).
"""
from __future__ import annotations

import os

from . import _fallback

BACKEND = "numpy"
_impl = _fallback

if not os.environ.get("PBRKIT_PURE_PYTHON"):
    try:
        from . import _speedups as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback

gini = _impl.gini
gini_sorted = _impl.gini_sorted
gini_rows = _impl.gini_rows
weighted_gini = _impl.weighted_gini
leave_one_out_gini = _impl.leave_one_out_gini
theil = _impl.theil
aligned_gini = _impl.aligned_gini
bootstrap_alignment = _impl.bootstrap_alignment
permutation_mean_diff = _impl.permutation_mean_diff
resample_cis = _impl.resample_cis

__all__ = [
    "BACKEND",
    "gini",
    "gini_sorted",
    "gini_rows",
    "weighted_gini",
    "leave_one_out_gini",
    "theil",
    "aligned_gini",
    "bootstrap_alignment",
    "permutation_mean_diff",
    "resample_cis",
]
