"""Parameter encodings shared by the compiled and pure backends.

Fields and distance sources are flattened into plain numeric arrays so the
same data drives both implementations. Background types:

    0 zero        params ()
    1 uniform     params (c_1..c_n)
    2 rotation    params (omega, cx, cy)            [n = 2]
    3 linear      params (A row-major, n*n entries)
    4 radial      params (strength,)                b = strength * x/|x|

Point trajectories (n = 2):

    0 fixed            params (zx, zy)
    1 circular         params (cx, cy, radius, omega, phase)
    2 piecewise linear knots in (koff, kt, kz)
    3 power drift      params (zx, zy, vx, vy, alpha)   z0 + v*t^alpha

Distance modes:

    0 none
    1 static point set           d(t, x) = min_j |x - P_j|
    2 sectional to trajectories  d(t, x) = min_i |x - z_i(t)|
    3 space-time graph           d(t, x) = min over sampled s of
                                 sqrt((t-s)^2 + min_i |x - z_i(s)|^2)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BG_ZERO = 0
BG_UNIFORM = 1
BG_ROTATION = 2
BG_LINEAR = 3
BG_RADIAL = 4

TR_FIXED = 0
TR_CIRCULAR = 1
TR_PWLINEAR = 2
TR_POWER = 3

DIST_NONE = 0
DIST_STATIC = 1
DIST_SECTIONAL = 2
DIST_SPACETIME = 3

STATUS_ALIVE = 0
STATUS_ABSORBED = 1
STATUS_FLAGGED = 2
STATUS_ESCAPED = 3

TRAJ_PARAM_WIDTH = 5


def _empty_traj_arrays():
    return (
        np.zeros(0, dtype=np.int32),
        np.zeros((0, TRAJ_PARAM_WIDTH), dtype=np.float64),
        np.zeros(1, dtype=np.int32),
        np.zeros(0, dtype=np.float64),
        np.zeros((0, 2), dtype=np.float64),
    )


@dataclass
class TrajectoryEncoding:
    """Flattened list of parametric point trajectories in R^2."""

    types: np.ndarray
    params: np.ndarray
    knot_offsets: np.ndarray
    knot_times: np.ndarray
    knot_points: np.ndarray

    @classmethod
    def empty(cls) -> "TrajectoryEncoding":
        return cls(*_empty_traj_arrays())

    @property
    def count(self) -> int:
        return self.types.shape[0]


@dataclass
class KernelField:
    """Background + point-vortex field in flattened form."""

    n: int
    bg_type: int
    bg_params: np.ndarray
    vortices: TrajectoryEncoding
    gamma: np.ndarray  # circulation per vortex, 1/(2 pi) folded in if normalized

    @classmethod
    def background_only(cls, n: int, bg_type: int, bg_params) -> "KernelField":
        return cls(n, bg_type, np.asarray(bg_params, dtype=np.float64),
                   TrajectoryEncoding.empty(), np.zeros(0))


@dataclass
class KernelDistance:
    """Distance source for step capping, traces and absorption."""

    mode: int
    static_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    trajectories: TrajectoryEncoding = field(default_factory=TrajectoryEncoding.empty)
    scan_step: float = 0.0
    horizon: float = 1.0

    @classmethod
    def none(cls) -> "KernelDistance":
        return cls(mode=DIST_NONE)


@dataclass
class FlowResult:
    """Raw integrator output; one row per initial point."""

    trajectory: np.ndarray     # (K, N, n) positions at output times
    status: np.ndarray         # (N,) status codes
    event_time: np.ndarray     # (N,) absorption/escape time, nan if alive
    d_initial: np.ndarray      # (N,) distance at t0
    global_min: np.ndarray     # (N,) min distance over all substeps
    interval_min: np.ndarray   # (K-1, N) min distance per output interval
    steps: np.ndarray          # (N,) accepted step count
