"""Coupled point-vortex / vorticity-particle system in the plane.

The vorticity density is carried by particles p_i with fixed weights
omega_i (vorticity is constant along trajectories, so weights never
change). Particles move in the blob-regularized field of the other
particles plus the exact singular field of the point vortex; the vortex
itself moves only in the particle-induced (regular) part:

    dp_i/dt = sum_j omega_j K_rho(p_i - p_j) + Gamma K(p_i - z)
    dz/dt   = sum_j omega_j K_rho(z - p_j)

with K(x) = x^perp/|x|^2 and K_rho(x) = x^perp/(|x|^2 + rho^2). The blob
radius rho mollifies particle-particle interactions (and enforces a
bounded particle-induced velocity); the particle-vortex interaction keeps
the exact singular kernel, which is the object under study.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels as kr
from .flow import AvoidanceReport
from .sets import Box

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ParticleState:
    """Snapshot of the coupled system at one time."""

    positions: np.ndarray   # (N, 2)
    weights: np.ndarray     # (N,) vorticity carried by each particle
    vortex: np.ndarray      # (2,)
    time: float

    @property
    def total_vorticity(self) -> float:
        return float(self.weights.sum())

    def centroid(self, vortex_strength: float) -> np.ndarray:
        """Circulation-weighted centroid of particles plus vortex."""
        total = self.weights.sum() + vortex_strength
        return (self.weights @ self.positions + vortex_strength * self.vortex) / total


@dataclass
class VortexWaveResult:
    times: np.ndarray          # (K,)
    vortex_path: np.ndarray    # (K, 2)
    snapshots: list            # ParticleState per output time
    weights: np.ndarray        # (N,) vorticity weights (shared array)
    area_weights: np.ndarray   # (N,) initial cell areas, for tube measures
    min_separation: np.ndarray  # (N,) min |p_i - z| over all substeps
    d_initial: np.ndarray      # (N,) |p_i(0) - z(0)|
    absorbed: np.ndarray       # (N,) bool, particle hit the delta_min tube
    blob_radius: float
    vortex_strength: float
    normalized: bool


def particles_from_grid(omega0, box: Box, resolution: int, cutoff: float = 1e-12):
    """Sample a vorticity density on a cell-center grid.

    Returns (positions, vorticity weights, cell areas); cells with
    |omega| <= cutoff are dropped.
    """
    axes = [
        box.lo[j] + (np.arange(resolution) + 0.5) * (box.hi[j] - box.lo[j]) / resolution
        for j in range(2)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    cell = box.volume / resolution ** 2
    dens = np.asarray(omega0(pts), dtype=float)
    keep = np.abs(dens) > cutoff
    return pts[keep], dens[keep] * cell, np.full(int(keep.sum()), cell)


def simulate_vortex_wave(
    positions: np.ndarray,
    weights: np.ndarray,
    z0,
    vortex_strength: float,
    horizon: float,
    out_times: np.ndarray | None = None,
    blob_radius: float | None = None,
    area_weights: np.ndarray | None = None,
    normalized: bool = False,
    h_max: float = 1.0 / 512.0,
    c_step: float = 0.1,
    delta_min: float = 1e-6,
) -> VortexWaveResult:
    """Advance the coupled system to the horizon with shared RK4 steps.

    The step is capped by c_step * min|p - z| / (1 + max speed). The blob
    radius defaults to twice the initial inter-particle spacing. Particles
    entering the delta_min tube of the vortex are frozen and flagged; the
    vortex entering a particle blob core only warns (the regular part
    stays bounded).
    """
    pts = np.atleast_2d(np.asarray(positions, dtype=float)).copy()
    w = np.asarray(weights, dtype=float)
    n_pts = pts.shape[0]
    z = np.asarray(z0, dtype=float).copy()
    if out_times is None:
        out_times = np.linspace(0.0, horizon, 33)
    out_times = np.asarray(out_times, dtype=float)
    if blob_radius is None:
        blob_radius = 2.0 * _typical_spacing(pts)
    rho2 = blob_radius * blob_radius
    scale = 1.0 / TWO_PI if normalized else 1.0
    gamma = vortex_strength * scale
    if area_weights is None:
        area_weights = np.full(n_pts, 1.0 / max(n_pts, 1))

    if n_pts and float(np.min(np.linalg.norm(pts - z, axis=1))) <= delta_min:
        raise ValueError("vortex must start outside the particle delta_min tube")

    absorbed = np.zeros(n_pts, dtype=bool)
    d0 = np.linalg.norm(pts - z, axis=1) if n_pts else np.zeros(0)
    min_sep = d0.copy()
    snapshots = [ParticleState(pts.copy(), w, z.copy(), float(out_times[0]))]
    z_path = [z.copy()]
    warned_core = False

    def rhs(p, zz, active):
        dp = np.zeros_like(p)
        if n_pts:
            vp = kr.biot_savart(p, p, w * scale, rho2, True)
            rel = p - zz
            r2 = (rel ** 2).sum(axis=1)
            r2 = np.where(r2 > 0, r2, 1.0)
            vp[:, 0] += gamma * (-rel[:, 1]) / r2
            vp[:, 1] += gamma * rel[:, 0] / r2
            dp[active] = vp[active]
            dz = kr.biot_savart(zz[None, :], p, w * scale, rho2, False)[0]
        else:
            dz = np.zeros(2)
        return dp, dz

    t = float(out_times[0])
    for k in range(1, out_times.size):
        target = float(out_times[k])
        while t < target - 1e-15:
            active = ~absorbed
            k1p, k1z = rhs(pts, z, active)
            speed = max(
                float(np.sqrt((k1p ** 2).sum(axis=1)).max()) if n_pts else 0.0,
                float(np.linalg.norm(k1z)),
            )
            h = min(h_max, target - t)
            if n_pts and active.any():
                d_now = np.linalg.norm(pts[active] - z, axis=1)
                h = min(h, c_step * float(d_now.min()) / (1.0 + speed))
            h = max(h, 1e-9)
            k2p, k2z = rhs(pts + 0.5 * h * k1p, z + 0.5 * h * k1z, active)
            k3p, k3z = rhs(pts + 0.5 * h * k2p, z + 0.5 * h * k2z, active)
            k4p, k4z = rhs(pts + h * k3p, z + h * k3z, active)
            pts = pts + h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
            z = z + h / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z)
            t = target if h >= target - t else t + h
            if n_pts:
                sep = np.linalg.norm(pts - z, axis=1)
                min_sep = np.minimum(min_sep, sep)
                newly = (~absorbed) & (sep < delta_min)
                absorbed |= newly
                if not warned_core and float(sep.min()) < blob_radius:
                    warnings.warn("vortex entered a particle blob core", stacklevel=2)
                    warned_core = True
        snapshots.append(ParticleState(pts.copy(), w, z.copy(), target))
        z_path.append(z.copy())
    return VortexWaveResult(
        out_times, np.asarray(z_path), snapshots, w, np.asarray(area_weights),
        min_sep, d0, absorbed, blob_radius, vortex_strength, normalized,
    )


def _typical_spacing(pts: np.ndarray) -> float:
    if pts.shape[0] < 2:
        return 0.05
    # nearest-neighbor median via a small sample
    sample = pts[:: max(1, pts.shape[0] // 256)]
    d = np.sqrt(((sample[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    d[d == 0] = np.inf
    return float(np.median(d.min(axis=1)))


def estimate_lipschitz(result: VortexWaveResult) -> float:
    """Max difference quotient of the computed vortex path."""
    dz = np.linalg.norm(np.diff(result.vortex_path, axis=0), axis=1)
    dt = np.diff(result.times)
    return float((dz / dt).max()) if dz.size else 0.0


def vortex_avoidance_report(
    result: VortexWaveResult,
    delta_ladder,
    r0: float,
    compressibility: float = 1.0,
    seed: int = 0,
    domain: Box | None = None,
    samples: int = 100_000,
    tolerance: float = 0.1,
) -> tuple[AvoidanceReport, np.ndarray]:
    """Tube-entry statistics of particles around the vortex trajectory.

    The sectional distance to the vortex graph is |x - z(t)|; particles
    with initial clearance at least r0 enter F(delta) when their minimum
    separation drops below delta. Area weights give the Lebesgue measure
    mu(F(delta)); the second return value is the fraction of |vorticity|
    weight entering each tube. The bound reuses the tube integral of
    d**-1 (1 + |b . grad d|) with the particle-induced field (the vortex
    term is exactly tangential to the tube and drops out).
    """
    deltas = np.sort(np.asarray(delta_ladder, dtype=float))[::-1]
    if deltas.max() >= r0:
        raise ValueError("delta ladder must stay below r0")
    eligible = result.d_initial >= r0
    entering_min = np.where(result.absorbed, 0.0, result.min_separation)
    mu = np.empty(deltas.size)
    stderr = np.empty(deltas.size)
    omega_frac = np.empty(deltas.size)
    aw = result.area_weights
    total_omega = float(np.abs(result.weights).sum())
    elig_w = float(aw[eligible].sum())
    n_elig = max(int(eligible.sum()), 1)
    for i, delta in enumerate(deltas):
        entering = eligible & (entering_min < delta)
        mu[i] = float(aw[entering].sum())
        p = mu[i] / elig_w if elig_w > 0 else 0.0
        stderr[i] = float(elig_w * math.sqrt(max(p * (1 - p), 0.0) / n_elig))
        omega_frac[i] = (
            float(np.abs(result.weights[entering]).sum()) / total_omega
            if total_omega > 0 else 0.0
        )
    product = mu * np.log(r0 / deltas)
    if domain is None:
        allpts = np.concatenate([result.vortex_path] + [s.positions for s in result.snapshots])
        domain = Box(allpts.min(axis=0) - 0.5, allpts.max(axis=0) + 0.5)
    exc = max(1e-4, float(deltas.min()) / 8.0)
    bound, bound_wide = _vw_tube_integral(result, r0, domain, (exc, 2 * exc), seed, samples)
    bound *= compressibility
    bound_wide *= compressibility
    ok = product <= bound * (1.0 + tolerance)
    report = AvoidanceReport(r0, deltas, mu, stderr, product, bound, bound_wide,
                             (exc, 2 * exc), compressibility, ok, tolerance, elig_w)
    return report, omega_frac


def _vw_tube_integral(result, r0, domain, radii, seed, samples):
    """MC tube integral; the particle-induced field is evaluated on the
    nearest snapshot and only its radial part enters (the vortex term is
    tangential to |x - z(t)| exactly)."""
    from . import rng

    gen = rng.stream(seed, "vw-bound")
    T0, T1 = result.times[0], result.times[-1]
    ts = T0 + gen.random(samples) * (T1 - T0)
    xs = domain.sample(gen, samples)
    k_idx = np.clip(
        np.searchsorted(result.times, ts) - 0, 0, result.times.size - 1)
    scale = 1.0 / TWO_PI if result.normalized else 1.0
    out = []
    d = np.empty(samples)
    radial = np.empty(samples)
    for k in np.unique(k_idx):
        snap = result.snapshots[int(k)]
        rows = k_idx == k
        rel = xs[rows] - snap.vortex
        d[rows] = np.sqrt((rel ** 2).sum(axis=1))
        v = kr.biot_savart(xs[rows], snap.positions, snap.weights * scale,
                           result.blob_radius ** 2, False)
        dd = np.where(d[rows] > 0, d[rows], 1.0)
        radial[rows] = np.abs((v * rel).sum(axis=1)) / dd
    for radius in radii:
        keep = (d > radius) & (d < r0)
        if not keep.any():
            out.append(0.0)
            continue
        integrand = (1.0 + radial[keep]) / d[keep]
        out.append(float(integrand.sum()) / samples * domain.volume * (T1 - T0))
    return out[0], out[1]
