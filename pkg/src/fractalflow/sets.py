"""Space-time singular sets with known fractal structure.

Three representations are supported:

* ``ProductSet`` -- a time set crossed with a spatial point set,
* ``GraphSet``  -- trajectories ``{(t, Z(t, x)) : t in [0, T], x in S0}``
  traced by a time-Hoelder evaluator ``Z``,
* ``CloudSet``  -- a bare finite sample of space-time points.

Spatial building blocks (Cantor prefractals, reciprocal-power sequences)
carry their self-similarity dimension so estimators can be checked against
the known value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import rng

MAX_CANTOR_DEPTH = 16

Array = np.ndarray


class HolderCheckError(ValueError):
    """Raised when a trajectory bundle fails its sampled Hoelder condition."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in R^n, used as sampling/integration domain."""

    lo: Array
    hi: Array

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("box needs lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, x: Array) -> Array:
        x = np.atleast_2d(x)
        return np.all((x >= self.lo) & (x <= self.hi), axis=1)

    def sample(self, generator: np.random.Generator, count: int) -> Array:
        u = generator.random((count, self.dim))
        return self.lo + u * (self.hi - self.lo)


@dataclass(frozen=True)
class InitialSet:
    """Finite spatial point set with an optional known limit dimension."""

    points: Array
    ambient_dim: int
    theoretical_dim: float | None = None
    generator_tag: str = "custom"
    # Finest construction scale; estimators should not trust scales below it.
    resolution: float = 0.0

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] == 0:
            raise ValueError("initial set needs at least one point")
        if pts.shape[1] != self.ambient_dim:
            raise ValueError(
                f"points have dimension {pts.shape[1]}, expected {self.ambient_dim}"
            )
        if not np.all(np.isfinite(pts)):
            raise ValueError("initial set must be bounded (finite coordinates)")
        if self.theoretical_dim is not None and not (
            0.0 <= self.theoretical_dim <= self.ambient_dim
        ):
            raise ValueError("theoretical_dim outside [0, ambient_dim]")
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    def embed(self, ambient_dim: int) -> "InitialSet":
        """Pad coordinates with zeros up to `ambient_dim`."""
        if ambient_dim < self.ambient_dim:
            raise ValueError("cannot embed into a lower dimension")
        pad = np.zeros((self.count, ambient_dim - self.ambient_dim))
        return InitialSet(
            np.hstack([self.points, pad]),
            ambient_dim,
            self.theoretical_dim,
            self.generator_tag + f"+embed{ambient_dim}",
            self.resolution,
        )


def make_cantor(keep_ratio: float, depth: int, max_depth: int = MAX_CANTOR_DEPTH) -> InitialSet:
    """Endpoints of the depth-th Cantor prefractal on [0, 1].

    Each step keeps the two end subintervals of relative length `keep_ratio`.
    ``depth=0`` is the first subdivision: points {0, r, 1-r, 1}. At depth d
    the prefractal is 2^(d+1) intervals of length keep_ratio^(d+1); all their
    endpoints are returned. The limit set has self-similarity dimension
    log 2 / log(1/keep_ratio).
    """
    if not (0.0 < keep_ratio < 0.5):
        raise ValueError("keep_ratio must lie in (0, 1/2)")
    if depth < 0 or depth > max_depth:
        raise ValueError(f"depth must lie in [0, {max_depth}] (point-count budget)")
    intervals = np.array([[0.0, 1.0]])
    for _ in range(depth + 1):
        length = intervals[:, 1] - intervals[:, 0]
        left = np.stack([intervals[:, 0], intervals[:, 0] + keep_ratio * length], axis=1)
        right = np.stack([intervals[:, 1] - keep_ratio * length, intervals[:, 1]], axis=1)
        intervals = np.concatenate([left, right])
    points = np.sort(intervals.reshape(-1))
    dim = math.log(2.0) / math.log(1.0 / keep_ratio)
    return InitialSet(
        points[:, None],
        ambient_dim=1,
        theoretical_dim=dim,
        generator_tag=f"cantor(keep={keep_ratio},depth={depth})",
        resolution=keep_ratio ** (depth + 1),
    )


def make_reciprocal_powers(power: float, count: int) -> InitialSet:
    """The set {n^-p : 1 <= n <= count} with its accumulation point 0.

    Box-counting dimension of the limit set is 1/(1+p).
    """
    if power < 1.0:
        raise ValueError("power must be >= 1")
    if count < 2:
        raise ValueError("count must be >= 2")
    n = np.arange(1, count + 1, dtype=float)
    points = np.concatenate([[0.0], n ** (-power)])
    return InitialSet(
        points[:, None],
        ambient_dim=1,
        theoretical_dim=1.0 / (1.0 + power),
        generator_tag=f"reciprocal(p={power},N={count})",
        resolution=float(count ** (-power) - (count + 1) ** (-power)),
    )


@dataclass(frozen=True)
class TrajectoryBundle:
    """Evaluator Z(t, x) moving a spatial set through time.

    Z must be uniformly alpha-Hoelder in t: |Z(t1,x) - Z(t2,x)| <=
    holder_constant * |t1 - t2|**holder_exponent for all x. The condition is
    spot-checked on random samples when a graph is built (Z is a black box,
    so the check is probabilistic, not exhaustive).
    """

    evaluate: Callable[[float, Array], Array]
    holder_exponent: float
    holder_constant: float
    horizon: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.holder_exponent <= 1.0):
            raise ValueError("holder_exponent must lie in (0, 1]")
        if self.holder_constant <= 0.0 or self.horizon <= 0.0:
            raise ValueError("holder_constant and horizon must be positive")

    def __call__(self, t: float, points: Array) -> Array:
        out = np.atleast_2d(np.asarray(self.evaluate(float(t), np.atleast_2d(points)), dtype=float))
        return out


def check_holder(
    bundle: TrajectoryBundle,
    points: Array,
    samples: int = 2000,
    seed: int = 0,
    rel_tol: float = 1e-9,
) -> tuple[float, Array] | None:
    """Spot-check the Hoelder bound on random (t1, t2, x) triples.

    Returns None if no violation was found, otherwise (excess, (t1, t2, x))
    for the worst violating triple.
    """
    gen = rng.stream(seed, "holder-check")
    pts = np.atleast_2d(points)
    worst = None
    chunk = 512
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        t1 = gen.random(m) * bundle.horizon
        t2 = gen.random(m) * bundle.horizon
        idx = gen.integers(0, pts.shape[0], size=m)
        for j in range(m):
            z1 = bundle(t1[j], pts[idx[j]])
            z2 = bundle(t2[j], pts[idx[j]])
            lhs = float(np.linalg.norm(z1 - z2))
            rhs = bundle.holder_constant * abs(t1[j] - t2[j]) ** bundle.holder_exponent
            excess = lhs - rhs * (1.0 + rel_tol)
            if excess > 0 and (worst is None or excess > worst[0]):
                worst = (excess, (float(t1[j]), float(t2[j]), pts[idx[j]].copy()))
        done += m
    return worst


class SpaceTimeSet:
    """Base for singular sets S inside [0, T] x R^n."""

    ambient_dim: int
    horizon: float

    def temporal_section(self, t: float) -> Array:
        """Points of S(t) = {x : (t, x) in S}; shape (m, n), possibly empty."""
        raise NotImplementedError

    def sample_spacetime(self, time_step: float) -> Array:
        """Space-time sample of S as rows (t, x1..xn), for generic estimators."""
        raise NotImplementedError

    def bounding_box(self) -> Box:
        """Spatial bounding box of all member points."""
        raise NotImplementedError


@dataclass(frozen=True)
class ProductSet(SpaceTimeSet):
    """S = time_set x A. The time factor is an interval or a finite sample."""

    time_interval: tuple[float, float] | None
    time_points: Array | None
    spatial: InitialSet
    horizon: float = 1.0

    def __post_init__(self):
        if (self.time_interval is None) == (self.time_points is None):
            raise ValueError("give exactly one of time_interval / time_points")
        if self.time_points is not None:
            tp = np.sort(np.asarray(self.time_points, dtype=float).ravel())
            if tp.size == 0:
                raise ValueError("empty time factor")
            object.__setattr__(self, "time_points", tp)
        if self.spatial.count == 0:
            raise ValueError("empty spatial factor")

    @property
    def ambient_dim(self) -> int:
        return self.spatial.ambient_dim

    def time_distance(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.time_interval is not None:
            a, b = self.time_interval
            return np.maximum(np.maximum(a - t, t - b), 0.0)
        return np.min(np.abs(t[..., None] - self.time_points), axis=-1)

    def time_contains(self, t: float, tol: float = 0.0) -> bool:
        return bool(self.time_distance(np.asarray(t)) <= tol)

    def temporal_section(self, t: float) -> Array:
        if self.time_contains(t, tol=1e-12):
            return self.spatial.points.copy()
        return np.empty((0, self.ambient_dim))

    def sample_spacetime(self, time_step: float) -> Array:
        if self.time_interval is not None:
            a, b = self.time_interval
            m = max(2, int(round((b - a) / time_step)) + 1)
            ts = np.linspace(a, b, m)
        else:
            ts = self.time_points
        pts = self.spatial.points
        t_col = np.repeat(ts, pts.shape[0])[:, None]
        x_cols = np.tile(pts, (len(ts), 1))
        return np.hstack([t_col, x_cols])

    def bounding_box(self) -> Box:
        pts = self.spatial.points
        return Box(pts.min(axis=0) - 1e-9, pts.max(axis=0) + 1e-9)


@dataclass(frozen=True)
class GraphSet(SpaceTimeSet):
    """S = {(t, Z(t, x)) : t in [0, T], x in S0} for a Hoelder bundle Z."""

    initial: InitialSet
    bundle: TrajectoryBundle

    @property
    def ambient_dim(self) -> int:
        return self.initial.ambient_dim

    @property
    def horizon(self) -> float:
        return self.bundle.horizon

    def temporal_section(self, t: float) -> Array:
        if not (0.0 <= t <= self.horizon):
            raise ValueError("section time outside [0, T]")
        return self.bundle(t, self.initial.points)

    def sample_spacetime(self, time_step: float) -> Array:
        m = max(2, int(round(self.horizon / time_step)) + 1)
        ts = np.linspace(0.0, self.horizon, m)
        rows = []
        for t in ts:
            sec = self.temporal_section(t)
            rows.append(np.hstack([np.full((sec.shape[0], 1), t), sec]))
        return np.concatenate(rows)

    def section_table(self, time_step: float) -> tuple[Array, Array]:
        """(times, sections) with sections[k] = Z(times[k], S0); uniform grid."""
        m = max(2, int(round(self.horizon / time_step)) + 1)
        ts = np.linspace(0.0, self.horizon, m)
        secs = np.stack([self.temporal_section(t) for t in ts])
        return ts, secs

    def bounding_box(self) -> Box:
        sample = self.sample_spacetime(self.horizon / 64.0)[:, 1:]
        return Box(sample.min(axis=0) - 1e-9, sample.max(axis=0) + 1e-9)


@dataclass(frozen=True)
class CloudSet(SpaceTimeSet):
    """Finite sample of (t, x) points; sections snap to nearby sample times."""

    points: Array  # rows (t, x1..xn)
    horizon: float = 1.0
    snap_tolerance: float | None = None  # default: half the median time spacing

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] == 0 or pts.shape[1] < 2:
            raise ValueError("cloud needs rows (t, x1..xn)")
        object.__setattr__(self, "points", pts)
        if self.snap_tolerance is None:
            ts = np.unique(pts[:, 0])
            tol = 0.5 * float(np.median(np.diff(ts))) if ts.size > 1 else 0.5 * self.horizon
            object.__setattr__(self, "snap_tolerance", tol)

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1] - 1

    def temporal_section(self, t: float) -> Array:
        mask = np.abs(self.points[:, 0] - t) <= self.snap_tolerance
        return self.points[mask, 1:]

    def sample_spacetime(self, time_step: float) -> Array:
        return self.points.copy()

    def bounding_box(self) -> Box:
        x = self.points[:, 1:]
        return Box(x.min(axis=0) - 1e-9, x.max(axis=0) + 1e-9)


def make_graph(
    initial: InitialSet,
    bundle: TrajectoryBundle,
    check_samples: int = 2000,
    seed: int = 0,
) -> GraphSet:
    """Build a trajectory-graph set, rejecting bundles that fail the sampled
    Hoelder condition (the diagnostic names the violating triple)."""
    violation = check_holder(bundle, initial.points, samples=check_samples, seed=seed)
    if violation is not None:
        excess, (t1, t2, x) = violation
        raise HolderCheckError(
            f"Hoelder condition violated by {excess:.3e} at t1={t1:.6g}, t2={t2:.6g}, x={x}"
        )
    return GraphSet(initial, bundle)


def make_product(
    time_spec: tuple[float, float] | Sequence[float] | Array,
    spatial: InitialSet,
    horizon: float | None = None,
) -> ProductSet:
    """Product set time_spec x spatial. `time_spec` is an (a, b) interval or a
    finite collection of times."""
    arr = np.asarray(time_spec, dtype=float)
    if arr.ndim == 1 and arr.size == 2 and arr[1] > arr[0] and isinstance(time_spec, tuple):
        interval = (float(arr[0]), float(arr[1]))
        T = horizon if horizon is not None else interval[1]
        return ProductSet(interval, None, spatial, horizon=T)
    times = arr.ravel()
    T = horizon if horizon is not None else float(times.max())
    if T <= 0.0:
        T = 1.0
    return ProductSet(None, times, spatial, horizon=T)


def temporal_section(target: SpaceTimeSet, t: float) -> Array:
    return target.temporal_section(t)


def static_graph(initial: InitialSet, horizon: float = 1.0) -> GraphSet:
    """Graph of the identity evolution Z(t, x) = x."""
    bundle = TrajectoryBundle(lambda t, x: x, holder_exponent=1.0,
                              holder_constant=1e-12, horizon=horizon)
    # K may be arbitrarily small for constant trajectories; keep a tiny positive
    # constant so the stored bound is valid with zero slack.
    return GraphSet(initial, bundle)
