"""Pure numpy implementations of the hot kernels.

Semantics here are the reference; the compiled extension mirrors them
particle for particle. Everything is vectorized over query points or
ensemble members, with per-member adaptive state kept in arrays.
"""

from __future__ import annotations

import numpy as np

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
    FlowResult,
    KernelDistance,
    KernelField,
    TrajectoryEncoding,
)

_SINGULAR_R2 = 1e-28
_CHUNK = 4096


def min_dist(queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Min Euclidean distance from each query row to the point set."""
    q = np.atleast_2d(np.asarray(queries, dtype=float))
    p = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(q.shape[0])
    for start in range(0, q.shape[0], _CHUNK):
        block = q[start:start + _CHUNK]
        d2 = ((block[:, None, :] - p[None, :, :]) ** 2).sum(axis=2)
        out[start:start + _CHUNK] = np.sqrt(d2.min(axis=1))
    return out


def eval_trajectories(enc: TrajectoryEncoding, t) -> np.ndarray:
    """Positions of all encoded trajectories at time(s) t.

    Returns shape (count, 2) for scalar t, else (count, len(t), 2).
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty((enc.count, t_arr.size, 2))
    for i in range(enc.count):
        kind = int(enc.types[i])
        prm = enc.params[i]
        if kind == TR_FIXED:
            out[i, :, 0] = prm[0]
            out[i, :, 1] = prm[1]
        elif kind == TR_CIRCULAR:
            ang = prm[3] * t_arr + prm[4]
            out[i, :, 0] = prm[0] + prm[2] * np.cos(ang)
            out[i, :, 1] = prm[1] + prm[2] * np.sin(ang)
        elif kind == TR_PWLINEAR:
            lo, hi = enc.knot_offsets[i], enc.knot_offsets[i + 1]
            kt = enc.knot_times[lo:hi]
            out[i, :, 0] = np.interp(t_arr, kt, enc.knot_points[lo:hi, 0])
            out[i, :, 1] = np.interp(t_arr, kt, enc.knot_points[lo:hi, 1])
        elif kind == TR_POWER:
            drift = np.abs(t_arr) ** prm[4]
            out[i, :, 0] = prm[0] + prm[2] * drift
            out[i, :, 1] = prm[1] + prm[3] * drift
        else:
            raise ValueError(f"unknown trajectory type {kind}")
    if np.isscalar(t) or np.asarray(t).ndim == 0:
        return out[:, 0, :]
    return out


def _background(field: KernelField, t, x: np.ndarray) -> np.ndarray:
    prm = field.bg_params
    if field.bg_type == BG_ZERO:
        return np.zeros_like(x)
    if field.bg_type == BG_UNIFORM:
        return np.broadcast_to(prm, x.shape).copy()
    if field.bg_type == BG_ROTATION:
        omega, cx, cy = prm[0], prm[1], prm[2]
        out = np.empty_like(x)
        out[:, 0] = -omega * (x[:, 1] - cy)
        out[:, 1] = omega * (x[:, 0] - cx)
        return out
    if field.bg_type == BG_LINEAR:
        n = field.n
        a = prm.reshape(n, n)
        return x @ a.T
    if field.bg_type == BG_RADIAL:
        norm = np.sqrt((x ** 2).sum(axis=1))
        safe = np.where(norm > 0.0, norm, 1.0)
        return prm[0] * x / safe[:, None]
    raise ValueError(f"unknown background type {field.bg_type}")


def eval_field(field: KernelField, t, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Field values at (t, x[i]); t scalar or per-row array.

    Returns (values, singular_mask). Rows evaluated exactly on a vortex
    center are flagged singular and their value is unusable.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = _background(field, t, x)
    singular = np.zeros(x.shape[0], dtype=bool)
    if field.vortices.count:
        t_arr = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
        z = eval_trajectories(field.vortices, t_arr)  # (nv, N, 2)
        for i in range(field.vortices.count):
            rx = x[:, 0] - z[i, :, 0]
            ry = x[:, 1] - z[i, :, 1]
            r2 = rx * rx + ry * ry
            bad = r2 < _SINGULAR_R2
            singular |= bad
            r2 = np.where(bad, 1.0, r2)
            g = field.gamma[i]
            out[:, 0] += g * (-ry) / r2
            out[:, 1] += g * rx / r2
    return out, singular


def _sectional(dist: KernelDistance, t, x: np.ndarray) -> np.ndarray:
    t_arr = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
    z = eval_trajectories(dist.trajectories, t_arr)  # (nv, N, 2)
    d2 = ((x[None, :, :] - z) ** 2).sum(axis=2)
    return np.sqrt(d2.min(axis=0))


def _static(dist: KernelDistance, x: np.ndarray) -> np.ndarray:
    return min_dist(x, dist.static_points)


def eval_distance(dist: KernelDistance, t, x: np.ndarray) -> np.ndarray:
    """Distance from (t, x[i]) to the encoded source; t scalar or per-row."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if dist.mode == DIST_NONE:
        return np.full(x.shape[0], np.inf)
    if dist.mode == DIST_STATIC:
        return _static(dist, x)
    if dist.mode == DIST_SECTIONAL:
        return _sectional(dist, t, x)
    if dist.mode == DIST_SPACETIME:
        return _spacetime_scan(dist, t, x)
    raise ValueError(f"unknown distance mode {dist.mode}")


def _spacetime_scan(dist: KernelDistance, t, x: np.ndarray) -> np.ndarray:
    """Exact min over the sampled time grid, scanning outward from t.

    The space-time minimizer satisfies |t - s| <= current best, so the scan
    stops once the pure time gap exceeds the best candidate.
    """
    h = dist.scan_step
    n_grid = int(round(dist.horizon / h))
    t_arr = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],)).astype(float)
    best = _sectional(dist, t_arr, x)
    j0 = np.clip(np.rint(t_arr / h).astype(np.int64), 0, n_grid)
    for direction in (1, -1):
        offset = 0 if direction == 1 else 1
        active = np.ones(x.shape[0], dtype=bool)
        while True:
            j = j0 + direction * offset
            valid = active & (j >= 0) & (j <= n_grid)
            if not valid.any():
                break
            s = j[valid] * h
            gap2 = (t_arr[valid] - s) ** 2
            still = gap2 < best[valid] ** 2
            idx = np.nonzero(valid)[0]
            active[idx[~still]] = False
            idx = idx[still]
            if idx.size:
                dsec = _sectional(dist, s[still], x[idx])
                cand = np.sqrt(gap2[still] + dsec ** 2)
                best[idx] = np.minimum(best[idx], cand)
            offset += 1
    return best


def graph_scan_dist(
    tq: np.ndarray,
    xq: np.ndarray,
    grid_times: np.ndarray,
    sections: np.ndarray,
) -> np.ndarray:
    """Space-time distance to a sampled trajectory graph.

    `sections[k]` holds the section points at `grid_times[k]` (uniform grid).
    Exact over the sampled graph: the scan window covers every grid time
    whose pure time gap could still beat the best candidate.
    """
    tq = np.atleast_1d(np.asarray(tq, dtype=float))
    xq = np.atleast_2d(np.asarray(xq, dtype=float))
    m = grid_times.shape[0]
    h = grid_times[1] - grid_times[0]
    j0 = np.clip(np.rint((tq - grid_times[0]) / h).astype(np.int64), 0, m - 1)
    sec0 = sections[j0]  # (Q, msec, n)
    d2 = ((xq[:, None, :] - sec0) ** 2).sum(axis=2).min(axis=1)
    best = np.sqrt((tq - grid_times[j0]) ** 2 + d2)
    for direction in (1, -1):
        offset = 1
        active = np.ones(tq.size, dtype=bool)
        while True:
            j = j0 + direction * offset
            valid = active & (j >= 0) & (j <= m - 1)
            if not valid.any():
                break
            idx = np.nonzero(valid)[0]
            gap2 = (tq[idx] - grid_times[j[idx]]) ** 2
            still = gap2 < best[idx] ** 2
            active[idx[~still]] = False
            idx = idx[still]
            if idx.size:
                sec = sections[j0[idx] + direction * offset]
                d2 = ((xq[idx, None, :] - sec) ** 2).sum(axis=2).min(axis=1)
                best[idx] = np.minimum(best[idx], np.sqrt(gap2[still] + d2))
            offset += 1
    return best


def biot_savart(
    targets: np.ndarray,
    sources: np.ndarray,
    weights: np.ndarray,
    blob_radius2: float,
    exclude_self: bool,
) -> np.ndarray:
    """Velocity induced at targets by weighted perpendicular kernels.

    Kernel is x_perp / (|x|^2 + blob_radius2); `exclude_self` skips the
    j == i term when targets and sources are the same list.
    """
    tg = np.atleast_2d(np.asarray(targets, dtype=float))
    src = np.atleast_2d(np.asarray(sources, dtype=float))
    w = np.asarray(weights, dtype=float)
    out = np.zeros_like(tg)
    for start in range(0, tg.shape[0], _CHUNK):
        stop = min(start + _CHUNK, tg.shape[0])
        rx = tg[start:stop, 0][:, None] - src[None, :, 0]
        ry = tg[start:stop, 1][:, None] - src[None, :, 1]
        r2 = rx * rx + ry * ry + blob_radius2
        if exclude_self:
            rows = np.arange(start, stop)
            r2[rows - start, rows] = np.inf
        inv = w / r2
        out[start:stop, 0] = (-ry * inv).sum(axis=1)
        out[start:stop, 1] = (rx * inv).sum(axis=1)
    return out


def flow_integrate(
    field: KernelField,
    dist: KernelDistance,
    x0: np.ndarray,
    out_times: np.ndarray,
    h_max: float,
    c_step: float,
    h_floor: float,
    delta_min: float,
    escape_lo: np.ndarray | None = None,
    escape_hi: np.ndarray | None = None,
) -> FlowResult:
    """Adaptive RK4 ensemble integration with distance tracking.

    Steps are capped at c_step * d / (1 + |b|) near the singular source, and
    at the gap to the next output time. Members are absorbed (and frozen)
    when the distance drops below delta_min, flagged on step underflow or a
    singular field evaluation, and marked escaped when leaving the escape
    box. Flagged members count as touching the source (global_min = 0).
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    out_times = np.asarray(out_times, dtype=float)
    n_pts, n = x0.shape
    n_out = out_times.shape[0]
    has_dist = dist.mode != DIST_NONE
    has_escape = escape_lo is not None

    traj = np.empty((n_out, n_pts, n))
    traj[0] = x0
    status = np.full(n_pts, STATUS_ALIVE, dtype=np.uint8)
    event_time = np.full(n_pts, np.nan)
    interval_min = np.full((n_out - 1, n_pts), np.nan)
    steps = np.zeros(n_pts, dtype=np.int64)

    t = np.full(n_pts, out_times[0])
    x = x0.copy()
    d = eval_distance(dist, t, x) if has_dist else np.full(n_pts, np.inf)
    d_initial = d.copy()
    global_min = d.copy()

    def kill(idx, code, set_zero_min):
        status[idx] = code
        event_time[idx] = t[idx]
        if set_zero_min:
            global_min[idx] = 0.0

    for k in range(1, n_out):
        target = out_times[k]
        alive = status == STATUS_ALIVE
        interval_min[k - 1, alive] = d[alive]
        while True:
            act = np.nonzero((status == STATUS_ALIVE) & (t < target))[0]
            if act.size == 0:
                break
            b1, sing = eval_field(field, t[act], x[act])
            if sing.any():
                kill(act[sing], STATUS_FLAGGED, True)
                act = act[~sing]
                b1 = b1[~sing]
                if act.size == 0:
                    continue
            speed = np.sqrt((b1 ** 2).sum(axis=1))
            gap = target - t[act]
            h = np.minimum(h_max, gap)
            if has_dist:
                h = np.minimum(h, c_step * d[act] / (1.0 + speed))
            # underflow only when the singularity cap binds; a tiny
            # interval-closing remainder is a legitimate final step
            under = (h < h_floor) & (h < gap)
            if under.any():
                kill(act[under], STATUS_FLAGGED, True)
                act = act[~under]
                b1, h = b1[~under], h[~under]
                if act.size == 0:
                    continue
            hc = h[:, None]
            xa, ta = x[act], t[act]
            k2, s2 = eval_field(field, ta + 0.5 * h, xa + 0.5 * hc * b1)
            k3, s3 = eval_field(field, ta + 0.5 * h, xa + 0.5 * hc * k2)
            k4, s4 = eval_field(field, ta + h, xa + hc * k3)
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
                d_new = eval_distance(dist, t_new, x_new)
                d[act] = d_new
                global_min[act] = np.minimum(global_min[act], d_new)
                interval_min[k - 1, act] = np.fmin(interval_min[k - 1, act], d_new)
                absorbed = d_new < delta_min
                if absorbed.any():
                    kill(act[absorbed], STATUS_ABSORBED, False)
                    act = act[~absorbed]
                    x_new = x_new[~absorbed]
                    if act.size == 0:
                        continue
            if has_escape:
                outside = ((x_new < escape_lo) | (x_new > escape_hi)).any(axis=1)
                if outside.any():
                    kill(act[outside], STATUS_ESCAPED, False)
        traj[k] = x
    return FlowResult(traj, status, event_time, d_initial, global_min, interval_min, steps)
