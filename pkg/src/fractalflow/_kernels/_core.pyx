# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: ensemble RK4 integration, distance scans and
Biot-Savart summation. Mirrors the pure numpy backend member for member."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, NAN, cos, fabs, pow, sin, sqrt

cnp.import_array()

DEF SINGULAR_R2 = 1e-28

# status codes / background / trajectory / distance enums; keep in sync with common.py
DEF ST_ALIVE = 0
DEF ST_ABSORBED = 1
DEF ST_FLAGGED = 2
DEF ST_ESCAPED = 3


cdef inline void _traj_pos(
    int kind, const double[:, ::1] params, int idx,
    const int[::1] koff, const double[::1] kt, const double[:, ::1] kz,
    double t, double* zx, double* zy,
) noexcept nogil:
    cdef double ang, drift, w
    cdef int lo, hi, a, b, mid
    if kind == 0:  # fixed
        zx[0] = params[idx, 0]
        zy[0] = params[idx, 1]
    elif kind == 1:  # circular
        ang = params[idx, 3] * t + params[idx, 4]
        zx[0] = params[idx, 0] + params[idx, 2] * cos(ang)
        zy[0] = params[idx, 1] + params[idx, 2] * sin(ang)
    elif kind == 2:  # piecewise linear, clamped at the ends
        lo = koff[idx]
        hi = koff[idx + 1]
        if t <= kt[lo] or hi - lo == 1:
            zx[0] = kz[lo, 0]
            zy[0] = kz[lo, 1]
        elif t >= kt[hi - 1]:
            zx[0] = kz[hi - 1, 0]
            zy[0] = kz[hi - 1, 1]
        else:
            a = lo
            b = hi - 1
            while b - a > 1:
                mid = (a + b) // 2
                if kt[mid] <= t:
                    a = mid
                else:
                    b = mid
            w = (t - kt[a]) / (kt[b] - kt[a])
            zx[0] = kz[a, 0] + w * (kz[b, 0] - kz[a, 0])
            zy[0] = kz[a, 1] + w * (kz[b, 1] - kz[a, 1])
    else:  # power drift
        drift = pow(fabs(t), params[idx, 4])
        zx[0] = params[idx, 0] + params[idx, 2] * drift
        zy[0] = params[idx, 1] + params[idx, 3] * drift


cdef inline int _field_at(
    int n, int bg_type, const double[::1] bgp,
    int nv, const int[::1] vtype, const double[:, ::1] vparams,
    const int[::1] vkoff, const double[::1] vkt, const double[:, ::1] vkz,
    const double[::1] gamma,
    double t, const double* x, double* out,
) noexcept nogil:
    """Write b(t, x) into out; return 1 if the point sits on a vortex center."""
    cdef int j, r, c, i
    cdef double norm2, norm, zx, zy, rx, ry, r2
    if bg_type == 0:
        for j in range(n):
            out[j] = 0.0
    elif bg_type == 1:
        for j in range(n):
            out[j] = bgp[j]
    elif bg_type == 2:
        out[0] = -bgp[0] * (x[1] - bgp[2])
        out[1] = bgp[0] * (x[0] - bgp[1])
    elif bg_type == 3:
        for r in range(n):
            out[r] = 0.0
            for c in range(n):
                out[r] += bgp[r * n + c] * x[c]
    else:  # radial
        norm2 = 0.0
        for j in range(n):
            norm2 += x[j] * x[j]
        if norm2 > 0.0:
            norm = sqrt(norm2)
            for j in range(n):
                out[j] = bgp[0] * x[j] / norm
        else:
            for j in range(n):
                out[j] = 0.0
    cdef int singular = 0
    for i in range(nv):
        _traj_pos(vtype[i], vparams, i, vkoff, vkt, vkz, t, &zx, &zy)
        rx = x[0] - zx
        ry = x[1] - zy
        r2 = rx * rx + ry * ry
        if r2 < SINGULAR_R2:
            singular = 1
        else:
            out[0] += gamma[i] * (-ry) / r2
            out[1] += gamma[i] * rx / r2
    return singular


cdef inline double _sectional_at(
    int n, int nt, const int[::1] ttype, const double[:, ::1] tparams,
    const int[::1] tkoff, const double[::1] tkt, const double[:, ::1] tkz,
    double t, const double* x,
) noexcept nogil:
    cdef double best = INFINITY
    cdef double zx, zy, rx, ry, d2
    cdef int i
    for i in range(nt):
        _traj_pos(ttype[i], tparams, i, tkoff, tkt, tkz, t, &zx, &zy)
        rx = x[0] - zx
        ry = x[1] - zy
        d2 = rx * rx + ry * ry
        if d2 < best:
            best = d2
    return sqrt(best)


cdef inline double _static_at(
    int n, const double[:, ::1] pts, const double* x,
) noexcept nogil:
    cdef double best = INFINITY
    cdef double d2, diff
    cdef int i, j
    for i in range(pts.shape[0]):
        d2 = 0.0
        for j in range(n):
            diff = x[j] - pts[i, j]
            d2 += diff * diff
        if d2 < best:
            best = d2
    return sqrt(best)


cdef inline double _dist_at(
    int n, int mode, const double[:, ::1] static_pts,
    int nt, const int[::1] ttype, const double[:, ::1] tparams,
    const int[::1] tkoff, const double[::1] tkt, const double[:, ::1] tkz,
    double scan_h, double horizon,
    double t, const double* x,
) noexcept nogil:
    cdef double best, s, gap, gap2, dsec
    cdef long j0, j, n_grid, off
    cdef int direction
    if mode == 0:
        return INFINITY
    if mode == 1:
        return _static_at(n, static_pts, x)
    if mode == 2:
        return _sectional_at(n, nt, ttype, tparams, tkoff, tkt, tkz, t, x)
    # space-time scan over the sampled trajectory graph
    best = _sectional_at(n, nt, ttype, tparams, tkoff, tkt, tkz, t, x)
    n_grid = <long>(horizon / scan_h + 0.5)
    j0 = <long>(t / scan_h + 0.5)
    if j0 < 0:
        j0 = 0
    if j0 > n_grid:
        j0 = n_grid
    for direction in range(2):
        off = 0 if direction == 0 else 1
        while True:
            j = j0 + off if direction == 0 else j0 - off
            if j < 0 or j > n_grid:
                break
            s = j * scan_h
            gap = t - s
            gap2 = gap * gap
            if gap2 >= best * best:
                break
            dsec = _sectional_at(n, nt, ttype, tparams, tkoff, tkt, tkz, s, x)
            gap2 = sqrt(gap2 + dsec * dsec)
            if gap2 < best:
                best = gap2
            off += 1
    return best


cdef class _FieldView:
    cdef int n, bg_type, nv
    cdef const double[::1] bg_params
    cdef const int[::1] vtype
    cdef const double[:, ::1] vparams
    cdef const int[::1] vkoff
    cdef const double[::1] vkt
    cdef const double[:, ::1] vkz
    cdef const double[::1] gamma


cdef _FieldView _view_field(object field):
    cdef _FieldView v = _FieldView()
    v.n = field.n
    v.bg_type = field.bg_type
    v.bg_params = np.ascontiguousarray(field.bg_params, dtype=np.float64)
    enc = field.vortices
    v.nv = enc.count
    v.vtype = np.ascontiguousarray(enc.types, dtype=np.int32)
    v.vparams = np.ascontiguousarray(enc.params, dtype=np.float64)
    v.vkoff = np.ascontiguousarray(enc.knot_offsets, dtype=np.int32)
    v.vkt = np.ascontiguousarray(enc.knot_times, dtype=np.float64)
    v.vkz = np.ascontiguousarray(enc.knot_points, dtype=np.float64)
    v.gamma = np.ascontiguousarray(field.gamma, dtype=np.float64)
    return v


cdef class _DistView:
    cdef int n, mode, nt
    cdef const double[:, ::1] static_pts
    cdef const int[::1] ttype
    cdef const double[:, ::1] tparams
    cdef const int[::1] tkoff
    cdef const double[::1] tkt
    cdef const double[:, ::1] tkz
    cdef double scan_h, horizon


cdef _DistView _view_dist(object dist, int n):
    cdef _DistView v = _DistView()
    v.n = n
    v.mode = dist.mode
    v.static_pts = np.ascontiguousarray(
        np.atleast_2d(dist.static_points), dtype=np.float64)
    enc = dist.trajectories
    v.nt = enc.count
    v.ttype = np.ascontiguousarray(enc.types, dtype=np.int32)
    v.tparams = np.ascontiguousarray(enc.params, dtype=np.float64)
    v.tkoff = np.ascontiguousarray(enc.knot_offsets, dtype=np.int32)
    v.tkt = np.ascontiguousarray(enc.knot_times, dtype=np.float64)
    v.tkz = np.ascontiguousarray(enc.knot_points, dtype=np.float64)
    v.scan_h = dist.scan_step if dist.scan_step else 1.0
    v.horizon = dist.horizon
    return v


def min_dist(queries, points):
    q = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
    p = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    cdef const double[:, ::1] qv = q
    cdef const double[:, ::1] pv = p
    out = np.empty(q.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    cdef int n = q.shape[1]
    with nogil:
        for i in range(qv.shape[0]):
            ov[i] = _static_at(n, pv, &qv[i, 0])
    return out


def eval_trajectories(enc, t):
    from .pure import eval_trajectories as _pure_eval
    return _pure_eval(enc, t)


def eval_field(field, t, x):
    x = np.ascontiguousarray(np.atleast_2d(x), dtype=np.float64)
    cdef const double[:, ::1] xv = x
    cdef Py_ssize_t count = x.shape[0]
    t_arr = np.ascontiguousarray(np.broadcast_to(np.asarray(t, dtype=np.float64), (count,)))
    cdef const double[::1] tv = t_arr
    cdef _FieldView f = _view_field(field)
    out = np.empty_like(x)
    sing = np.zeros(count, dtype=np.uint8)
    cdef double[:, ::1] ov = out
    cdef cnp.uint8_t[::1] sv = sing
    cdef Py_ssize_t i
    with nogil:
        for i in range(count):
            sv[i] = _field_at(f.n, f.bg_type, f.bg_params, f.nv, f.vtype,
                              f.vparams, f.vkoff, f.vkt, f.vkz, f.gamma,
                              tv[i], &xv[i, 0], &ov[i, 0])
    return out, sing.astype(bool)


def eval_distance(dist, t, x):
    x = np.ascontiguousarray(np.atleast_2d(x), dtype=np.float64)
    cdef const double[:, ::1] xv = x
    cdef Py_ssize_t count = x.shape[0]
    t_arr = np.ascontiguousarray(np.broadcast_to(np.asarray(t, dtype=np.float64), (count,)))
    cdef const double[::1] tv = t_arr
    cdef _DistView dv = _view_dist(dist, x.shape[1])
    out = np.empty(count)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(count):
            ov[i] = _dist_at(dv.n, dv.mode, dv.static_pts, dv.nt, dv.ttype,
                             dv.tparams, dv.tkoff, dv.tkt, dv.tkz,
                             dv.scan_h, dv.horizon, tv[i], &xv[i, 0])
    return out


def graph_scan_dist(tq, xq, grid_times, sections):
    tq = np.ascontiguousarray(np.atleast_1d(tq), dtype=np.float64)
    xq = np.ascontiguousarray(np.atleast_2d(xq), dtype=np.float64)
    gt = np.ascontiguousarray(grid_times, dtype=np.float64)
    sec = np.ascontiguousarray(sections, dtype=np.float64)
    cdef const double[::1] tv = tq
    cdef const double[:, ::1] xv = xq
    cdef const double[::1] gv = gt
    cdef const double[:, :, ::1] sv = sec
    cdef Py_ssize_t nq = tq.shape[0]
    cdef int n = xq.shape[1]
    cdef long m = gt.shape[0]
    cdef double h = gv[1] - gv[0]
    out = np.empty(nq)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    cdef long j0, j, off
    cdef int direction
    cdef double best, gap, gap2, d2, diff, cand
    cdef Py_ssize_t a, c
    with nogil:
        for i in range(nq):
            j0 = <long>((tv[i] - gv[0]) / h + 0.5)
            if j0 < 0:
                j0 = 0
            if j0 > m - 1:
                j0 = m - 1
            best = INFINITY
            for a in range(sv.shape[1]):
                d2 = 0.0
                for c in range(n):
                    diff = xv[i, c] - sv[j0, a, c]
                    d2 += diff * diff
                if d2 < best:
                    best = d2
            gap = tv[i] - gv[j0]
            best = sqrt(gap * gap + best)
            for direction in range(2):
                off = 1
                while True:
                    j = j0 + off if direction == 0 else j0 - off
                    if j < 0 or j > m - 1:
                        break
                    gap = tv[i] - gv[j]
                    gap2 = gap * gap
                    if gap2 >= best * best:
                        break
                    for a in range(sv.shape[1]):
                        d2 = 0.0
                        for c in range(n):
                            diff = xv[i, c] - sv[j, a, c]
                            d2 += diff * diff
                        cand = sqrt(gap2 + d2)
                        if cand < best:
                            best = cand
                    off += 1
            ov[i] = best
    return out


def biot_savart(targets, sources, weights, double blob_radius2, bint exclude_self):
    tg = np.ascontiguousarray(np.atleast_2d(targets), dtype=np.float64)
    src = np.ascontiguousarray(np.atleast_2d(sources), dtype=np.float64)
    w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[:, ::1] tv = tg
    cdef const double[:, ::1] sv = src
    cdef const double[::1] wv = w
    out = np.zeros_like(tg)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j
    cdef double rx, ry, r2, ux, uy, inv
    with nogil:
        for i in range(tv.shape[0]):
            ux = 0.0
            uy = 0.0
            for j in range(sv.shape[0]):
                if exclude_self and j == i:
                    continue
                rx = tv[i, 0] - sv[j, 0]
                ry = tv[i, 1] - sv[j, 1]
                r2 = rx * rx + ry * ry + blob_radius2
                inv = wv[j] / r2
                ux += -ry * inv
                uy += rx * inv
            ov[i, 0] = ux
            ov[i, 1] = uy
    return out


def flow_integrate(field, dist, x0, out_times,
                   double h_max, double c_step, double h_floor, double delta_min,
                   escape_lo=None, escape_hi=None):
    from .common import FlowResult

    x0 = np.ascontiguousarray(np.atleast_2d(x0), dtype=np.float64)
    ot = np.ascontiguousarray(out_times, dtype=np.float64)
    cdef const double[:, ::1] x0v = x0
    cdef const double[::1] otv = ot
    cdef Py_ssize_t n_pts = x0.shape[0]
    cdef int n = x0.shape[1]
    cdef Py_ssize_t n_out = ot.shape[0]

    cdef _FieldView f = _view_field(field)
    cdef _DistView dv = _view_dist(dist, n)
    cdef bint has_dist = dv.mode != 0
    cdef bint has_escape = escape_lo is not None
    esc_lo = np.ascontiguousarray(escape_lo if has_escape else np.zeros(n), dtype=np.float64)
    esc_hi = np.ascontiguousarray(escape_hi if has_escape else np.zeros(n), dtype=np.float64)
    cdef const double[::1] elo = esc_lo
    cdef const double[::1] ehi = esc_hi

    traj = np.empty((n_out, n_pts, n))
    status = np.full(n_pts, ST_ALIVE, dtype=np.uint8)
    event_time = np.full(n_pts, np.nan)
    d_initial = np.empty(n_pts)
    global_min = np.empty(n_pts)
    interval_min = np.full((n_out - 1, n_pts), np.nan)
    steps = np.zeros(n_pts, dtype=np.int64)

    cdef double[:, :, ::1] trv = traj
    cdef cnp.uint8_t[::1] stv = status
    cdef double[::1] etv = event_time
    cdef double[::1] d0v = d_initial
    cdef double[::1] gmv = global_min
    cdef double[:, ::1] imv = interval_min
    cdef cnp.int64_t[::1] spv = steps

    cdef Py_ssize_t i, k
    cdef int j, st, sing, outside
    cdef double t, d, gmin, imin, target, speed, h, cap, gap, tol
    cdef double x[8]
    cdef double b1[8]
    cdef double k2[8]
    cdef double k3[8]
    cdef double k4[8]
    cdef double xs[8]
    cdef long nsteps

    if n > 8:
        raise ValueError("flow kernel supports ambient dimension <= 8")

    with nogil:
        for i in range(n_pts):
            for j in range(n):
                x[j] = x0v[i, j]
                trv[0, i, j] = x[j]
            t = otv[0]
            st = ST_ALIVE
            nsteps = 0
            if has_dist:
                d = _dist_at(dv.n, dv.mode, dv.static_pts, dv.nt, dv.ttype,
                             dv.tparams, dv.tkoff, dv.tkt, dv.tkz,
                             dv.scan_h, dv.horizon, t, x)
            else:
                d = INFINITY
            d0v[i] = d
            gmin = d
            for k in range(1, n_out):
                target = otv[k]
                imin = NAN
                if st == ST_ALIVE:
                    imin = d
                while st == ST_ALIVE and t < target:
                    sing = _field_at(f.n, f.bg_type, f.bg_params, f.nv, f.vtype,
                                     f.vparams, f.vkoff, f.vkt, f.vkz, f.gamma,
                                     t, x, b1)
                    if sing:
                        st = ST_FLAGGED
                        etv[i] = t
                        gmin = 0.0
                        break
                    speed = 0.0
                    for j in range(n):
                        speed += b1[j] * b1[j]
                    speed = sqrt(speed)
                    gap = target - t
                    h = h_max
                    if gap < h:
                        h = gap
                    if has_dist:
                        cap = c_step * d / (1.0 + speed)
                        if cap < h:
                            h = cap
                    # underflow only when the singularity cap binds; a tiny
                    # interval-closing remainder is a legitimate final step
                    if h < h_floor and h < gap:
                        st = ST_FLAGGED
                        etv[i] = t
                        gmin = 0.0
                        break
                    for j in range(n):
                        xs[j] = x[j] + 0.5 * h * b1[j]
                    sing = _field_at(f.n, f.bg_type, f.bg_params, f.nv, f.vtype,
                                     f.vparams, f.vkoff, f.vkt, f.vkz, f.gamma,
                                     t + 0.5 * h, xs, k2)
                    for j in range(n):
                        xs[j] = x[j] + 0.5 * h * k2[j]
                    sing |= _field_at(f.n, f.bg_type, f.bg_params, f.nv, f.vtype,
                                      f.vparams, f.vkoff, f.vkt, f.vkz, f.gamma,
                                      t + 0.5 * h, xs, k3)
                    for j in range(n):
                        xs[j] = x[j] + h * k3[j]
                    sing |= _field_at(f.n, f.bg_type, f.bg_params, f.nv, f.vtype,
                                      f.vparams, f.vkoff, f.vkt, f.vkz, f.gamma,
                                      t + h, xs, k4)
                    if sing:
                        st = ST_FLAGGED
                        etv[i] = t
                        gmin = 0.0
                        break
                    for j in range(n):
                        x[j] = x[j] + h / 6.0 * (b1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
                    if h >= target - t:
                        t = target
                    else:
                        t = t + h
                    nsteps += 1
                    if has_dist:
                        d = _dist_at(dv.n, dv.mode, dv.static_pts, dv.nt, dv.ttype,
                                     dv.tparams, dv.tkoff, dv.tkt, dv.tkz,
                                     dv.scan_h, dv.horizon, t, x)
                        if d < gmin:
                            gmin = d
                        if d < imin:
                            imin = d
                        if d < delta_min:
                            st = ST_ABSORBED
                            etv[i] = t
                            break
                    if has_escape:
                        outside = 0
                        for j in range(n):
                            if x[j] < elo[j] or x[j] > ehi[j]:
                                outside = 1
                        if outside:
                            st = ST_ESCAPED
                            etv[i] = t
                            break
                for j in range(n):
                    trv[k, i, j] = x[j]
                imv[k - 1, i] = imin
            stv[i] = st
            gmv[i] = gmin
            spv[i] = nsteps
    return FlowResult(traj, status, event_time, d_initial, global_min, interval_min, steps)
