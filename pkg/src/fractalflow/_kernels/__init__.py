"""Kernel backend selection.

The compiled extension is used when it imported cleanly; otherwise the pure
numpy implementation takes over. Set ``FRACTALFLOW_PURE=1`` to force the
fallback (useful for benchmarking and for debugging kernel discrepancies).
"""

from __future__ import annotations

import os

from .common import (
    BG_LINEAR,
    BG_RADIAL,
    BG_ROTATION,
    BG_UNIFORM,
    BG_ZERO,
    DIST_NONE,
    DIST_SECTIONAL,
    DIST_SPACETIME,
    DIST_STATIC,
    STATUS_ABSORBED,
    STATUS_ALIVE,
    STATUS_ESCAPED,
    STATUS_FLAGGED,
    TR_CIRCULAR,
    TR_FIXED,
    TR_POWER,
    TR_PWLINEAR,
    TRAJ_PARAM_WIDTH,
    FlowResult,
    KernelDistance,
    KernelField,
    TrajectoryEncoding,
)
from . import pure

_force_pure = os.environ.get("FRACTALFLOW_PURE", "").strip() not in ("", "0")

if _force_pure:
    _impl = pure
    BACKEND = "pure"
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = pure
        BACKEND = "pure"

min_dist = _impl.min_dist
eval_trajectories = _impl.eval_trajectories
eval_field = _impl.eval_field
eval_distance = _impl.eval_distance
graph_scan_dist = _impl.graph_scan_dist
biot_savart = _impl.biot_savart
flow_integrate = _impl.flow_integrate


def get_backend(name: str):
    """Backend module by name ('compiled' or 'pure'); for benchmarks/tests."""
    if name == "pure":
        return pure
    if name == "compiled":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")
