"""Singular vector fields: point-vortex terms plus smooth backgrounds.

A field is b(t, x) = background + sum of perpendicular-kernel vortex terms
Gamma_i * (x - z_i(t))^perp / |x - z_i(t)|^2 with (a, b)^perp = (-b, a).
The literal kernel omits 1/(2 pi); pass ``normalized=True`` for the
standard constant. Every enumerated background and trajectory type can be
flattened to the kernel encoding shared by both compute backends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kr
from ._kernels.common import (
    BG_LINEAR,
    BG_RADIAL,
    BG_ROTATION,
    BG_UNIFORM,
    BG_ZERO,
    TR_CIRCULAR,
    TR_FIXED,
    TR_POWER,
    TR_PWLINEAR,
    TRAJ_PARAM_WIDTH,
    KernelField,
    TrajectoryEncoding,
)
from .distance import DistanceEvaluator
from .sets import Box

TWO_PI = 2.0 * math.pi


class SingularPointError(ValueError):
    """Field evaluated exactly on a vortex trajectory."""


# ---------------------------------------------------------------------------
# backgrounds


@dataclass(frozen=True)
class ZeroBackground:
    n: int = 2

    def __call__(self, t, x):
        return np.zeros_like(np.atleast_2d(x))

    def divergence(self, t, x):
        return np.zeros(np.atleast_2d(x).shape[0])

    def encode(self):
        return BG_ZERO, np.zeros(0)


@dataclass(frozen=True)
class UniformBackground:
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))

    @property
    def n(self) -> int:
        return self.velocity.size

    def __call__(self, t, x):
        x = np.atleast_2d(x)
        return np.broadcast_to(self.velocity, x.shape).copy()

    def divergence(self, t, x):
        return np.zeros(np.atleast_2d(x).shape[0])

    def encode(self):
        return BG_UNIFORM, self.velocity.copy()


@dataclass(frozen=True)
class RotationBackground:
    """Rigid rotation about `center` with angular velocity `omega` (n = 2)."""

    omega: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)
    n: int = 2

    def __call__(self, t, x):
        x = np.atleast_2d(x)
        out = np.empty_like(x)
        out[:, 0] = -self.omega * (x[:, 1] - self.center[1])
        out[:, 1] = self.omega * (x[:, 0] - self.center[0])
        return out

    def divergence(self, t, x):
        return np.zeros(np.atleast_2d(x).shape[0])

    def encode(self):
        return BG_ROTATION, np.array([self.omega, self.center[0], self.center[1]])


@dataclass(frozen=True)
class LinearBackground:
    """b(t, x) = A x; divergence is trace(A)."""

    matrix: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise ValueError("matrix must be square")
        object.__setattr__(self, "matrix", a)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, t, x):
        return np.atleast_2d(x) @ self.matrix.T

    def divergence(self, t, x):
        return np.full(np.atleast_2d(x).shape[0], float(np.trace(self.matrix)))

    def encode(self):
        return BG_LINEAR, self.matrix.reshape(-1).copy()


@dataclass(frozen=True)
class RadialBackground:
    """b(t, x) = strength * x/|x|; divergence strength*(n-1)/|x| off the origin."""

    strength: float
    n: int = 2

    def __call__(self, t, x):
        x = np.atleast_2d(x)
        norm = np.sqrt((x ** 2).sum(axis=1))
        safe = np.where(norm > 0.0, norm, 1.0)
        return self.strength * x / safe[:, None]

    def divergence(self, t, x):
        x = np.atleast_2d(x)
        norm = np.sqrt((x ** 2).sum(axis=1))
        with np.errstate(divide="ignore"):
            return self.strength * (self.n - 1) / norm

    def encode(self):
        return BG_RADIAL, np.array([self.strength])


@dataclass(frozen=True)
class GridBackground:
    """Tabulated field on a regular grid with bilinear interpolation (n = 2).

    `values` has shape (2, ny, nx) over the cell-corner lattice of `box`.
    Not kernel-encodable; flows over it take the generic integrator path.
    """

    box: Box
    values: np.ndarray
    n: int = 2

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[0] != 2:
            raise ValueError("values must have shape (2, ny, nx)")
        object.__setattr__(self, "values", v)

    def _interp(self, comp: np.ndarray, x: np.ndarray) -> np.ndarray:
        ny, nx = comp.shape
        sx = (x[:, 0] - self.box.lo[0]) / (self.box.hi[0] - self.box.lo[0]) * (nx - 1)
        sy = (x[:, 1] - self.box.lo[1]) / (self.box.hi[1] - self.box.lo[1]) * (ny - 1)
        sx = np.clip(sx, 0.0, nx - 1 - 1e-12)
        sy = np.clip(sy, 0.0, ny - 1 - 1e-12)
        i0 = sx.astype(int)
        j0 = sy.astype(int)
        fx = sx - i0
        fy = sy - j0
        return (
            comp[j0, i0] * (1 - fx) * (1 - fy)
            + comp[j0, i0 + 1] * fx * (1 - fy)
            + comp[j0 + 1, i0] * (1 - fx) * fy
            + comp[j0 + 1, i0 + 1] * fx * fy
        )

    def __call__(self, t, x):
        x = np.atleast_2d(x)
        out = np.empty_like(x)
        out[:, 0] = self._interp(self.values[0], x)
        out[:, 1] = self._interp(self.values[1], x)
        return out

    def divergence(self, t, x, step: float = 1e-5):
        x = np.atleast_2d(x)
        div = np.zeros(x.shape[0])
        for j in range(2):
            e = np.zeros(2)
            e[j] = step
            div += (self(t, x + e)[:, j] - self(t, x - e)[:, j]) / (2 * step)
        return div

    def encode(self):
        return None


# ---------------------------------------------------------------------------
# point trajectories (n = 2)


@dataclass(frozen=True)
class FixedTrajectory:
    point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))

    holder_exponent: float = 1.0

    @property
    def holder_constant(self) -> float:
        return 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(self.point, t.shape + (2,)).copy()

    def encode_row(self):
        prm = np.zeros(TRAJ_PARAM_WIDTH)
        prm[:2] = self.point
        return TR_FIXED, prm, None


@dataclass(frozen=True)
class CircularTrajectory:
    center: tuple[float, float]
    radius: float
    omega: float
    phase: float = 0.0

    holder_exponent: float = 1.0

    @property
    def holder_constant(self) -> float:
        return abs(self.radius * self.omega)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        ang = self.omega * t + self.phase
        return np.stack(
            [self.center[0] + self.radius * np.cos(ang),
             self.center[1] + self.radius * np.sin(ang)], axis=-1)

    def encode_row(self):
        prm = np.array([self.center[0], self.center[1], self.radius, self.omega, self.phase])
        return TR_CIRCULAR, prm, None


@dataclass(frozen=True)
class PiecewiseLinearTrajectory:
    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.times, dtype=float)
        zs = np.atleast_2d(np.asarray(self.points, dtype=float))
        if ts.size != zs.shape[0] or zs.shape[1] != 2:
            raise ValueError("need matching knot times and 2-d knot points")
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            raise ValueError("knot times must increase")
        object.__setattr__(self, "times", ts)
        object.__setattr__(self, "points", zs)

    holder_exponent: float = 1.0

    @property
    def holder_constant(self) -> float:
        if self.times.size < 2:
            return 0.0
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1) / np.diff(self.times)
        return float(seg.max())

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        zx = np.interp(t, self.times, self.points[:, 0])
        zy = np.interp(t, self.times, self.points[:, 1])
        return np.stack([zx, zy], axis=-1)

    def encode_row(self):
        return TR_PWLINEAR, np.zeros(TRAJ_PARAM_WIDTH), (self.times, self.points)


@dataclass(frozen=True)
class PowerDriftTrajectory:
    """z(t) = start + velocity * t**exponent; alpha-Hoelder with K = |velocity|."""

    start: np.ndarray
    velocity: np.ndarray
    exponent: float

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))
        if not (0.0 < self.exponent <= 1.0):
            raise ValueError("exponent must lie in (0, 1]")

    @property
    def holder_exponent(self) -> float:
        return self.exponent

    @property
    def holder_constant(self) -> float:
        return float(np.linalg.norm(self.velocity))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        drift = np.abs(t) ** self.exponent
        return self.start + np.multiply.outer(drift, self.velocity)

    def encode_row(self):
        prm = np.array([self.start[0], self.start[1],
                        self.velocity[0], self.velocity[1], self.exponent])
        return TR_POWER, prm, None


def encode_trajectories(trajectories) -> TrajectoryEncoding:
    types, params, offsets = [], [], [0]
    knot_t, knot_z = [], []
    for tr in trajectories:
        kind, prm, knots = tr.encode_row()
        types.append(kind)
        params.append(prm)
        if knots is not None:
            knot_t.append(knots[0])
            knot_z.append(knots[1])
            offsets.append(offsets[-1] + knots[0].size)
        else:
            offsets.append(offsets[-1])
    if not types:
        return TrajectoryEncoding.empty()
    return TrajectoryEncoding(
        types=np.asarray(types, dtype=np.int32),
        params=np.asarray(params, dtype=np.float64),
        knot_offsets=np.asarray(offsets, dtype=np.int32),
        knot_times=np.concatenate(knot_t) if knot_t else np.zeros(0),
        knot_points=np.concatenate(knot_z) if knot_z else np.zeros((0, 2)),
    )


# ---------------------------------------------------------------------------
# field specification


@dataclass(frozen=True)
class VortexTerm:
    trajectory: object
    circulation: float
    normalized: bool = False

    @property
    def gamma_effective(self) -> float:
        return self.circulation / TWO_PI if self.normalized else self.circulation


@dataclass(frozen=True)
class FieldSpec:
    """Background plus point-vortex singular parts on [0, T] x R^n.

    `bv_off_singular_set` is a structural declaration from the construction
    recipe (all enumerated components are smooth off their trajectories);
    it is reported, never computed.
    """

    background: object
    vortices: tuple = ()
    n: int = 2
    horizon: float = 1.0
    bv_off_singular_set: bool = True

    def __post_init__(self):
        if self.vortices and self.n != 2:
            raise ValueError("vortex terms require ambient dimension 2")

    def __call__(self, t, x):
        values, singular = self.eval_checked(t, x)
        if singular.any():
            raise SingularPointError("field evaluated on a vortex trajectory")
        return values

    def eval_checked(self, t, x):
        """(values, singular_mask) without raising."""
        kf = self.kernel_field()
        if kf is not None:
            return kr.eval_field(kf, t, np.atleast_2d(x))
        x = np.atleast_2d(x)
        out = np.asarray(self.background(t, x), dtype=float).copy()
        singular = np.zeros(x.shape[0], dtype=bool)
        t_arr = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
        for term in self.vortices:
            z = term.trajectory(t_arr)
            r = x - z
            r2 = (r ** 2).sum(axis=1)
            bad = r2 < 1e-28
            singular |= bad
            r2 = np.where(bad, 1.0, r2)
            g = term.gamma_effective
            out[:, 0] += g * (-r[:, 1]) / r2
            out[:, 1] += g * r[:, 0] / r2
        return out, singular

    def divergence(self, t, x):
        """Analytic divergence; vortex terms contribute 0 off their centers."""
        return np.asarray(self.background.divergence(t, x), dtype=float)

    def kernel_field(self) -> KernelField | None:
        enc = self.background.encode()
        if enc is None:
            return None
        bg_type, bg_params = enc
        traj = encode_trajectories([v.trajectory for v in self.vortices])
        gamma = np.array([v.gamma_effective for v in self.vortices])
        return KernelField(self.n, bg_type, bg_params, traj, gamma)

    def max_speed(self, domain: Box, t_grid: np.ndarray, seed: int = 0,
                  samples: int = 4096) -> float:
        """Sampled sup |b| over domain x t_grid (singular rows skipped)."""
        from . import rng

        gen = rng.stream(seed, "field-bound")
        best = 0.0
        for t in t_grid:
            pts = domain.sample(gen, samples)
            vals, singular = self.eval_checked(t, pts)
            speeds = np.sqrt((vals ** 2).sum(axis=1))[~singular]
            if speeds.size:
                best = max(best, float(speeds.max()))
        return best


def make_point_vortex_field(
    trajectory,
    circulation: float,
    background=None,
    normalized: bool = False,
    horizon: float = 1.0,
) -> FieldSpec:
    """Single point-vortex field with optional smooth background (n = 2)."""
    bg = background if background is not None else ZeroBackground(2)
    term = VortexTerm(trajectory, circulation, normalized)
    return FieldSpec(bg, (term,), n=2, horizon=horizon)


def eval_field(b: FieldSpec, t, x):
    """Field value(s) at (t, x); raises SingularPointError on vortex centers."""
    return b(t, x)


# ---------------------------------------------------------------------------
# normal component and mixed norms


def fd_gradient(dist_fn, x: np.ndarray, step, ones_tol: float = 1e-3):
    """Central FD spatial gradient of a distance function, with one-sided
    fallback of smallest magnitude where |grad| > 1 + tol (flagged)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d0 = dist_fn(x)
    n = x.shape[1]
    h = np.broadcast_to(np.asarray(step, dtype=float), d0.shape)
    grad = np.empty_like(x)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        dp = dist_fn(x + h[:, None] * e)
        dm = dist_fn(x - h[:, None] * e)
        grad[:, j] = (dp - dm) / (2.0 * h)
    norm = np.sqrt((grad ** 2).sum(axis=1))
    flagged = norm > 1.0 + ones_tol
    for i in np.nonzero(flagged)[0]:
        fwd = np.empty(n)
        bwd = np.empty(n)
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            fwd[j] = (dist_fn(x[i] + h[i] * e)[0] - d0[i]) / h[i]
            bwd[j] = (d0[i] - dist_fn(x[i] - h[i] * e)[0]) / h[i]
        grad[i] = fwd if np.linalg.norm(fwd) <= np.linalg.norm(bwd) else bwd
    return grad, flagged


def normal_component(
    b: FieldSpec,
    evaluator: DistanceEvaluator,
    t: float,
    x,
    grad_step: float | None = None,
    sectional: bool = False,
    floor: float = 1e-9,
):
    """b . grad d at (t, x), gradient by central finite differences.

    `sectional=True` differentiates the sectional distance d_sec(t, .)
    instead of the space-time distance (the adapted machinery for vortex
    trajectory graphs). Points closer than `floor` to the set are rejected.
    Returns (values, flagged) with flags marking non-differentiable points.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if sectional:
        dist_fn = lambda pts: evaluator.dist_section(t, pts)
    else:
        dist_fn = lambda pts: evaluator.dist_spacetime(t, pts)
    d0 = dist_fn(x)
    if np.any(d0 <= floor):
        raise ValueError("distance floor breached; caller must excise the tube")
    h = grad_step if grad_step is not None else np.maximum(1e-4, d0 / 100.0)
    grad, flagged = fd_gradient(dist_fn, x, h)
    vals = b(t, x)
    return (vals * grad).sum(axis=1), flagged


@dataclass
class MixedNormEstimate:
    """Composite-quadrature L^p_t L^q_x norm, reported at two excision radii.

    The trend ratio compares the q-th power (the modular) at the small and
    the doubled excision radius: it grows like radius**(divergence rate) for
    non-integrable singularities and approaches 1 for integrable ones. A
    single number would hide the divergence.
    """

    value: float
    value_wider: float
    excision_radii: tuple[float, float]
    p: float
    q: float

    @property
    def trend_ratio(self) -> float:
        if self.value_wider == 0.0:
            return np.inf if self.value > 0 else 1.0
        ratio = self.value / self.value_wider
        return ratio ** self.q if np.isfinite(self.q) else ratio


def mixed_norm_estimate(
    f,
    p: float,
    q: float,
    domain: Box,
    t_grid: np.ndarray,
    excise: tuple[DistanceEvaluator, float] | None = None,
    spatial_resolution: int = 64,
    sectional: bool = False,
) -> MixedNormEstimate:
    """Quadrature estimate of ||f||_{L^p(0,T; L^q(domain))}.

    `f(t, X)` must return per-row values. With `excise=(evaluator, radius)`
    nodes inside the radius tube around the singular set are dropped, and
    the norm is evaluated at radius and 2*radius. An excision below the
    quadrature cell diagonal cannot be resolved and is widened to it.
    Infinite exponents take grid maxima. Non-finite values at kept nodes
    raise.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    nodes, cell_vol = _midpoint_grid(domain, spatial_resolution)
    if excise is not None:
        cell_diag = float(np.linalg.norm((domain.hi - domain.lo) / spatial_resolution))
        base_radius = max(excise[1], cell_diag)
        radii = (base_radius, 2.0 * base_radius)
    else:
        radii = (0.0, 0.0)
    values = []
    for radius in radii if excise is not None else (0.0,):
        inner = np.empty(t_grid.size)
        for k, t in enumerate(t_grid):
            vals = np.abs(np.asarray(f(t, nodes), dtype=float))
            if excise is not None:
                ev = excise[0]
                d = ev.dist_section(t, nodes) if sectional else ev.dist_spacetime(t, nodes)
                keep = d >= radius
                vals = vals[keep]
            if not np.all(np.isfinite(vals)):
                raise ValueError("non-finite integrand outside the excised tube")
            if vals.size == 0:
                inner[k] = 0.0
            elif np.isinf(q):
                inner[k] = vals.max()
            else:
                inner[k] = (np.sum(vals ** q) * cell_vol) ** (1.0 / q)
        if np.isinf(p):
            values.append(float(inner.max()))
        else:
            dt = (t_grid[-1] - t_grid[0]) / max(t_grid.size - 1, 1) if t_grid.size > 1 else 1.0
            w = np.full(t_grid.size, dt)
            if t_grid.size > 1:
                w[0] *= 0.5
                w[-1] *= 0.5
            values.append(float((np.sum(inner ** p * w)) ** (1.0 / p)))
    if excise is None:
        return MixedNormEstimate(values[0], values[0], (0.0, 0.0), p, q)
    return MixedNormEstimate(values[0], values[1], radii, p, q)


def _midpoint_grid(domain: Box, resolution: int) -> tuple[np.ndarray, float]:
    axes = [
        domain.lo[j] + (np.arange(resolution) + 0.5) * (domain.hi[j] - domain.lo[j]) / resolution
        for j in range(domain.dim)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=1)
    cell_vol = domain.volume / resolution ** domain.dim
    return nodes, cell_vol
