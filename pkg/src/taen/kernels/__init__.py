"""Numeric kernel backend selection.

Two interchangeable implementations exist: a Cython extension
(``_ckernels``) and a pure-NumPy module (``pykernels``). The compiled one
is preferred when importable; ``TAEN_BACKEND=python`` or
``TAEN_BACKEND=cython`` forces a choice. ``benchmarks/bench_kernels.py``
compares the two.
"""

import os

from taen.kernels.pykernels import NORM_EPS

_requested = os.environ.get("TAEN_BACKEND", "auto").lower()
if _requested not in ("auto", "cython", "python"):
    raise ImportError(
        f"TAEN_BACKEND must be 'auto', 'cython' or 'python', got {_requested!r}"
    )

if _requested == "python":
    from taen.kernels import pykernels as _impl

    BACKEND = "python"
else:
    try:
        from taen.kernels import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        from taen.kernels import pykernels as _impl

        BACKEND = "python"

pool_segments = _impl.pool_segments
normalize_rows = _impl.normalize_rows
normalize_rows_backward = _impl.normalize_rows_backward
trajectory_distances = _impl.trajectory_distances
test_distances = _impl.test_distances

__all__ = [
    "BACKEND",
    "NORM_EPS",
    "pool_segments",
    "normalize_rows",
    "normalize_rows_backward",
    "trajectory_distances",
    "test_distances",
]
