"""Regular-Lagrangian-flow ensembles past singular sets.

Trajectories solve dX/dt = b(t, X) by adaptive RK4 with a step cap
c_step * d / (1 + |b|) near the singular source; they are absorbed at the
distance floor delta_min (the field is undefined on the set itself, and
absorbed members are counted pessimistically as having entered every
tube). Avoidance is quantified by the weight mu(F(delta)) of initial
points whose trajectory starts at least r0 away from the set but enters
the delta-tube before the horizon; the theory bounds
mu(F(delta)) * log(r0/delta) by a compressibility constant times the tube
integral of d**-1 (1 + |b . grad d|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as kr
from . import rng
from ._kernels.common import (
    DIST_NONE,
    DIST_SECTIONAL,
    DIST_SPACETIME,
    DIST_STATIC,
    STATUS_ABSORBED,
    STATUS_ALIVE,
    STATUS_ESCAPED,
    STATUS_FLAGGED,
    FlowResult,
    KernelDistance,
)
from .fields import FieldSpec, encode_trajectories, fd_gradient
from .sets import Box

STATUS_NAMES = {
    STATUS_ALIVE: "alive",
    STATUS_ABSORBED: "absorbed",
    STATUS_FLAGGED: "absorbed_flagged",
    STATUS_ESCAPED: "escaped",
}


def distance_from_static_points(points: np.ndarray) -> KernelDistance:
    """Distance to a fixed spatial point set (time-axis product sets)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return KernelDistance(mode=DIST_STATIC, static_points=np.ascontiguousarray(pts))


def distance_from_trajectories(
    trajectories,
    horizon: float,
    mode: str = "sectional",
    scan_step: float | None = None,
) -> KernelDistance:
    """Distance to the graph of parametric point trajectories.

    'sectional' measures |x - z_i(t)| at the query time (the adapted
    machinery for vortex graphs); 'spacetime' scans the sampled graph for
    the full space-time distance.
    """
    enc = encode_trajectories(trajectories)
    kind = DIST_SECTIONAL if mode == "sectional" else DIST_SPACETIME
    step = scan_step if scan_step is not None else horizon / 2048.0
    return KernelDistance(mode=kind, trajectories=enc, scan_step=step, horizon=horizon)


def sample_initial(
    domain: Box, count: int, kind: str, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Initial points with weights summing to the domain volume.

    'grid' places cell centers (count rounded down to a lattice), weight =
    cell volume; 'mc' draws uniform points, weight = volume/count.
    """
    n = domain.dim
    if kind == "grid":
        m = max(1, int(round(count ** (1.0 / n))))
        axes = [
            domain.lo[j] + (np.arange(m) + 0.5) * (domain.hi[j] - domain.lo[j]) / m
            for j in range(n)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=1)
        w = np.full(pts.shape[0], domain.volume / pts.shape[0])
        return pts, w
    if kind == "mc":
        gen = rng.stream(seed, "initial-sample")
        pts = domain.sample(gen, count)
        w = np.full(count, domain.volume / count)
        return pts, w
    raise ValueError(f"unknown sampling kind {kind!r}")


@dataclass
class FlowEnsemble:
    """Trajectory ensemble with weights and distance traces."""

    times: np.ndarray          # (K,)
    positions: np.ndarray      # (K, N, n)
    weights: np.ndarray        # (N,)
    status: np.ndarray         # (N,)
    event_time: np.ndarray     # (N,)
    d_initial: np.ndarray      # (N,)
    global_min: np.ndarray     # (N,) min distance over all substeps
    interval_min: np.ndarray   # (K-1, N)
    steps: np.ndarray          # (N,)
    field: FieldSpec
    distance: KernelDistance

    @property
    def count(self) -> int:
        return self.positions.shape[1]

    @property
    def ambient_dim(self) -> int:
        return self.positions.shape[2]

    def status_name(self, i: int) -> str:
        return STATUS_NAMES[int(self.status[i])]

    def alive(self) -> np.ndarray:
        return self.status == STATUS_ALIVE


def integrate_flow(
    field: FieldSpec,
    x0: np.ndarray,
    weights: np.ndarray,
    out_times: np.ndarray,
    distance: KernelDistance | None = None,
    h_max: float = 1.0 / 256.0,
    c_step: float = 0.1,
    h_floor: float = 1e-8,
    delta_min: float = 1e-6,
    escape_box: Box | None = None,
) -> FlowEnsemble:
    """Integrate the ensemble; see module docstring for the stepping rules.

    Initial points closer than delta_min to the source are rejected."""
    dist = distance if distance is not None else KernelDistance.none()
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    out_times = np.asarray(out_times, dtype=float)
    if out_times.ndim != 1 or out_times.size < 2 or np.any(np.diff(out_times) <= 0):
        raise ValueError("out_times must be an increasing grid starting at t0")
    if dist.mode != DIST_NONE:
        d0 = kr.eval_distance(dist, out_times[0], x0)
        if np.any(d0 <= delta_min):
            raise ValueError("initial points must start outside the delta_min tube")
    esc_lo = escape_box.lo if escape_box is not None else None
    esc_hi = escape_box.hi if escape_box is not None else None
    kf = field.kernel_field()
    if kf is not None:
        raw = kr.flow_integrate(kf, dist, x0, out_times, h_max, c_step,
                                h_floor, delta_min, esc_lo, esc_hi)
    else:
        raw = _generic_flow(field, dist, x0, out_times, h_max, c_step,
                            h_floor, delta_min, esc_lo, esc_hi)
    w = np.asarray(weights, dtype=float)
    if w.shape != (x0.shape[0],):
        raise ValueError("weights must have one entry per initial point")
    return FlowEnsemble(out_times, raw.trajectory, w, raw.status, raw.event_time,
                        raw.d_initial, raw.global_min, raw.interval_min, raw.steps,
                        field, dist)


def _generic_flow(field, dist, x0, out_times, h_max, c_step, h_floor, delta_min,
                  esc_lo, esc_hi) -> FlowResult:
    """Fallback integrator for fields without a kernel encoding (tabulated
    backgrounds). Same stepping semantics as the kernels."""
    has_dist = dist.mode != DIST_NONE
    n_pts, n = x0.shape
    n_out = out_times.shape[0]
    traj = np.empty((n_out, n_pts, n))
    traj[0] = x0
    status = np.full(n_pts, STATUS_ALIVE, dtype=np.uint8)
    event_time = np.full(n_pts, np.nan)
    interval_min = np.full((n_out - 1, n_pts), np.nan)
    steps = np.zeros(n_pts, dtype=np.int64)
    t = np.full(n_pts, out_times[0])
    x = x0.copy()
    d = kr.eval_distance(dist, t, x) if has_dist else np.full(n_pts, np.inf)
    d_initial = d.copy()
    global_min = d.copy()

    def kill(idx, code, zero_min):
        status[idx] = code
        event_time[idx] = t[idx]
        if zero_min:
            global_min[idx] = 0.0

    for k in range(1, n_out):
        target = out_times[k]
        alive = status == STATUS_ALIVE
        interval_min[k - 1, alive] = d[alive]
        while True:
            act = np.nonzero((status == STATUS_ALIVE) & (t < target))[0]
            if act.size == 0:
                break
            b1, sing = field.eval_checked(t[act], x[act])
            if sing.any():
                kill(act[sing], STATUS_FLAGGED, True)
                act, b1 = act[~sing], b1[~sing]
                if act.size == 0:
                    continue
            speed = np.sqrt((b1 ** 2).sum(axis=1))
            gap = target - t[act]
            h = np.minimum(h_max, gap)
            if has_dist:
                h = np.minimum(h, c_step * d[act] / (1.0 + speed))
            # underflow only when the singularity cap binds, as in the kernels
            under = (h < h_floor) & (h < gap)
            if under.any():
                kill(act[under], STATUS_FLAGGED, True)
                act, b1, h = act[~under], b1[~under], h[~under]
                if act.size == 0:
                    continue
            hc = h[:, None]
            xa, ta = x[act], t[act]
            k2, s2 = field.eval_checked(ta + 0.5 * h, xa + 0.5 * hc * b1)
            k3, s3 = field.eval_checked(ta + 0.5 * h, xa + 0.5 * hc * k2)
            k4, s4 = field.eval_checked(ta + h, xa + hc * k3)
            sing = s2 | s3 | s4
            if sing.any():
                kill(act[sing], STATUS_FLAGGED, True)
                keep = ~sing
                act, b1, k2, k3, k4 = act[keep], b1[keep], k2[keep], k3[keep], k4[keep]
                h, hc, xa, ta = h[keep], hc[keep], xa[keep], ta[keep]
                if act.size == 0:
                    continue
            x_new = xa + hc / 6.0 * (b1 + 2.0 * k2 + 2.0 * k3 + k4)
            t_new = np.where(h >= target - ta, target, ta + h)
            x[act] = x_new
            t[act] = t_new
            steps[act] += 1
            if has_dist:
                d_new = kr.eval_distance(dist, t_new, x_new)
                d[act] = d_new
                global_min[act] = np.minimum(global_min[act], d_new)
                interval_min[k - 1, act] = np.fmin(interval_min[k - 1, act], d_new)
                absorbed = d_new < delta_min
                if absorbed.any():
                    kill(act[absorbed], STATUS_ABSORBED, False)
                    act, x_new = act[~absorbed], x_new[~absorbed]
                    if act.size == 0:
                        continue
            if esc_lo is not None:
                outside = ((x_new < esc_lo) | (x_new > esc_hi)).any(axis=1)
                if outside.any():
                    kill(act[outside], STATUS_ESCAPED, False)
        traj[k] = x
    return FlowResult(traj, status, event_time, d_initial, global_min,
                      interval_min, steps)


def integral_residual(
    ens: FlowEnsemble,
    per_unit_time: bool = True,
    resolve_threshold: float = 0.15,
) -> tuple[np.ndarray, np.ndarray]:
    """Residual of the integral trajectory equation on stored samples.

    Re-quadratures X(T) - x0 - int b(tau, X) dtau with composite Simpson
    over the output grid; alive trajectories should sit below the combined
    integrator and quadrature tolerance. The check is only meaningful where
    the output grid resolves the dynamics: members whose sampled velocity
    jumps by more than `resolve_threshold` (relative) between consecutive
    outputs are marked unresolved in the returned mask (their quadrature
    error reflects the sampling, not the solve). Dead trajectories give nan.
    """
    field = ens.field
    K, N, n = ens.positions.shape
    vals = np.empty((K, N, n))
    for k in range(K):
        vals[k], _ = field.eval_checked(ens.times[k], ens.positions[k])
    h = float(ens.times[1] - ens.times[0])
    pairs = (K - 1) // 2
    integral = np.zeros((N, n))
    for j in range(pairs):
        integral += (h / 3.0) * (vals[2 * j] + 4.0 * vals[2 * j + 1]
                                 + vals[2 * j + 2])
    if (K - 1) % 2:  # odd interval count: trapezoid on the last one
        integral += 0.5 * h * (vals[-2] + vals[-1])
    res = ens.positions[-1] - ens.positions[0] - integral
    out = np.linalg.norm(res, axis=1)
    if per_unit_time:
        out = out / (ens.times[-1] - ens.times[0])
    out[~ens.alive()] = np.nan
    jump = np.linalg.norm(np.diff(vals, axis=0), axis=2)
    scale = (np.linalg.norm(vals[1:], axis=2) + np.linalg.norm(vals[:-1], axis=2)
             + 1e-300)
    resolved = (jump / scale).max(axis=0) <= resolve_threshold
    resolved &= ens.alive()
    return out, resolved


@dataclass
class CompressibilityReport:
    L: float
    rows: list            # (time, box_index, ratio, stderr, hits, flagged)
    flagged_boxes: int

    @property
    def value(self) -> float:
        return self.L


def compressibility_estimate(
    ens: FlowEnsemble,
    test_boxes: list[Box],
    times: np.ndarray | None = None,
    min_hits: int = 100,
) -> CompressibilityReport:
    """Estimate the preimage-measure constant L.

    For each box B and output time t, the weighted measure of initial
    points whose image lies in B is compared with the box volume; L is the
    maximum ratio. Boxes catching fewer than `min_hits` members are flagged
    (and boxes the flow never visits are skipped with a note).
    """
    ts = ens.times if times is None else np.asarray(times, dtype=float)
    rows = []
    L = 0.0
    flagged = 0
    total_w = ens.weights.sum()
    for t in ts:
        k = int(np.argmin(np.abs(ens.times - t)))
        pos = ens.positions[k]
        for bi, box in enumerate(test_boxes):
            inside = box.contains(pos)
            hits = int(inside.sum())
            if hits == 0:
                rows.append((float(ens.times[k]), bi, np.nan, np.nan, 0, True))
                flagged += 1
                continue
            w_in = float(ens.weights[inside].sum())
            ratio = w_in / box.volume
            p = w_in / total_w
            stderr = float(total_w * math.sqrt(max(p * (1 - p), 0.0) / ens.count) / box.volume)
            flag = hits < min_hits
            flagged += int(flag)
            rows.append((float(ens.times[k]), bi, ratio, stderr, hits, flag))
            L = max(L, ratio)
    return CompressibilityReport(L, rows, flagged)


def g_avoidance(y, r0: float, delta: float):
    """Lyapunov weight log(r0/y) on [delta, r0], zero above r0."""
    y = np.asarray(y, dtype=float)
    clipped = np.clip(y, delta, None)
    return np.where(clipped > r0, 0.0, np.log(r0 / clipped))


@dataclass
class AvoidanceReport:
    r0: float
    deltas: np.ndarray
    mu: np.ndarray             # mu(F(delta))
    stderr: np.ndarray
    product: np.ndarray        # mu(F(delta)) * log(r0/delta)
    bound: float               # L * tube integral at the base excision
    bound_wider_excision: float
    excision_radii: tuple[float, float]
    compressibility: float
    bound_ok: np.ndarray       # product <= bound * (1 + tol) per delta
    tolerance: float
    eligible_weight: float

    @property
    def all_bounded(self) -> bool:
        return bool(self.bound_ok.all())


def avoidance_statistics(
    ens: FlowEnsemble,
    r0: float,
    deltas,
    domain: Box,
    compressibility: float,
    seed: int = 0,
    excision: float | None = None,
    samples: int = 200_000,
    tolerance: float = 0.1,
) -> AvoidanceReport:
    """Tube-entry statistics against the theoretical avoidance bound.

    F(delta) collects members with d(0, x0) >= r0 whose distance trace
    drops below delta before the horizon (per-substep minima, so the
    nesting F(delta') subset F(delta) for delta' <= delta is exact).
    Flagged members count as entering. The bound is
    compressibility * iint_{excision < d < r0} d**-1 (1 + |b . grad d|),
    Monte Carlo over [0, T] x domain, reported at two excision radii to
    expose divergence trends.
    """
    deltas = np.sort(np.asarray(deltas, dtype=float))[::-1]
    if deltas.max() >= r0:
        raise ValueError("the delta ladder must stay below r0")
    eligible = ens.d_initial >= r0
    elig_w = float(ens.weights[eligible].sum())
    mu = np.empty(deltas.size)
    stderr = np.empty(deltas.size)
    n_elig = int(eligible.sum())
    for i, delta in enumerate(deltas):
        entering = eligible & (ens.global_min < delta)
        mu[i] = float(ens.weights[entering].sum())
        p = mu[i] / elig_w if elig_w > 0 else 0.0
        stderr[i] = float(elig_w * math.sqrt(max(p * (1 - p), 0.0) / max(n_elig, 1)))
    product = mu * np.log(r0 / deltas)
    exc = excision if excision is not None else max(1e-4, float(deltas.min()) / 8.0)
    bound, bound_wide = _tube_integral(ens, r0, domain, (exc, 2 * exc), seed, samples)
    bound *= compressibility
    bound_wide *= compressibility
    ok = product <= bound * (1.0 + tolerance)
    return AvoidanceReport(r0, deltas, mu, stderr, product, bound, bound_wide,
                           (exc, 2 * exc), compressibility, ok, tolerance, elig_w)


def _tube_integral(ens: FlowEnsemble, r0, domain, radii, seed, samples):
    """MC estimate of iint_{radius < d < r0} d**-1 (1 + |b . grad d|) dx dt."""
    dist = ens.distance
    field = ens.field
    T0, T1 = ens.times[0], ens.times[-1]
    gen = rng.stream(seed, "avoidance-bound")
    ts = T0 + gen.random(samples) * (T1 - T0)
    xs = domain.sample(gen, samples)
    d = kr.eval_distance(dist, ts, xs)
    out = []
    for radius in radii:
        keep = (d > radius) & (d < r0)
        if not keep.any():
            out.append(0.0)
            continue
        tk, xk, dk = ts[keep], xs[keep], d[keep]
        grad = np.empty_like(xk)
        h = np.maximum(1e-4, dk / 100.0)
        for j in range(xk.shape[1]):
            e = np.zeros(xk.shape[1])
            e[j] = 1.0
            dp = kr.eval_distance(dist, tk, xk + h[:, None] * e)
            dm = kr.eval_distance(dist, tk, xk - h[:, None] * e)
            grad[:, j] = (dp - dm) / (2.0 * h)
        bvals, singular = field.eval_checked(tk, xk)
        normal = np.abs((bvals * grad).sum(axis=1))
        normal[singular] = 0.0
        integrand = (1.0 + normal) / dk
        total = float(integrand.sum()) / samples * domain.volume * (T1 - T0)
        out.append(total)
    return out[0], out[1]


@dataclass
class LyapunovTrace:
    """Per-output-step distance trace along one trajectory with the
    differential inequality |dd/dt| <= time_lipschitz + |b . grad d|."""

    times: np.ndarray
    distance: np.ndarray
    g_values: np.ndarray
    quotient: np.ndarray       # |delta d| / delta t, one per interval
    bound: np.ndarray          # per interval
    within: np.ndarray

    @property
    def fraction_within(self) -> float:
        return float(self.within.mean()) if self.within.size else 1.0


def lyapunov_trace(
    ens: FlowEnsemble,
    index: int,
    r0: float,
    delta: float,
    time_lipschitz: float = 1.0,
    tolerance: float = 0.05,
) -> LyapunovTrace:
    """Distance-derivative check along trajectory `index` on stored samples.

    `time_lipschitz` is 1 for the space-time distance (distance functions
    are 1-Lipschitz) and the trajectory Lipschitz constant for sectional
    mode. The trajectory must be alive on the queried window.
    """
    if ens.status[index] != STATUS_ALIVE:
        raise ValueError("trajectory not alive over the full window")
    pos = ens.positions[:, index, :]
    ts = ens.times
    d = kr.eval_distance(ens.distance, ts, pos)
    dt = np.diff(ts)
    quot = np.abs(np.diff(d)) / dt
    bound = np.empty_like(quot)
    for k in range(quot.size):
        grad, _ = fd_gradient(
            lambda p, tk=ts[k]: kr.eval_distance(ens.distance, tk, np.atleast_2d(p)),
            pos[k][None, :], max(1e-4, d[k] / 100.0))
        bvals, singular = ens.field.eval_checked(ts[k], pos[k][None, :])
        normal = 0.0 if singular[0] else abs(float((bvals[0] * grad[0]).sum()))
        bound[k] = time_lipschitz + normal + tolerance
    within = quot <= bound
    return LyapunovTrace(ts, d, g_avoidance(d, r0, delta), quot, bound, within)
