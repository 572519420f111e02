"""Space-time and sectional distance evaluation, neighborhood measures.

The space-time distance d_S(t, x) is the Euclidean distance from (t, x) to
the set S in [0, T] x R^n; d_sec(t, x) is the distance from x to the
temporal section S(t). Always d_S <= d_sec, and for a graph of trajectories
that are alpha-Hoelder in time with constant K the converse control

    d_sec(t, x) <= (K + 1) * d_S(t, x)**alpha      (for d_S < 1)

holds, with the two-sided Lipschitz version d_sec/(K+1) <= d_S when
alpha = 1. ``check_section_bound`` verifies both on random samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import rng
from . import _kernels as kr
from .sets import Box, CloudSet, GraphSet, ProductSet, SpaceTimeSet


class EmptySetError(ValueError):
    """Distance to an empty set / empty section is undefined."""


@dataclass
class MeasureEstimate:
    """Hit-or-miss Monte Carlo estimate of a Lebesgue measure."""

    value: float
    standard_error: float
    sample_count: int
    domain: Box
    low_confidence: bool = False

    def __post_init__(self):
        if self.value < 0 or self.value > self.domain.volume * (1 + 1e-12):
            raise ValueError("measure estimate outside [0, volume(domain)]")


class DistanceEvaluator:
    """Distance oracle for a SpaceTimeSet.

    mode 'exact_parametric' is available for products with an interval or
    finite time factor and for clouds (the finite representation is the
    set). Graphs are evaluated from a time-sampled section table at
    resolution `time_step`; the induced overestimate of d_S is at most
    time_step/2 + K*(time_step/2)**alpha, reported as `error_bound`.
    """

    def __init__(self, target: SpaceTimeSet, mode: str = "auto", time_step: float | None = None):
        self.target = target
        self.time_step = time_step if time_step is not None else target.horizon / 2048.0
        if mode == "auto":
            mode = "sampled" if isinstance(target, GraphSet) else "exact_parametric"
        self.mode = mode
        self._section_trees: dict[float, cKDTree] = {}
        if isinstance(target, GraphSet):
            grid, sections = target.section_table(self.time_step)
            self._grid_times = grid
            self._sections = np.ascontiguousarray(sections)
            bundle = target.bundle
            half = 0.5 * (grid[1] - grid[0])
            self.error_bound = half + bundle.holder_constant * half ** bundle.holder_exponent
        elif isinstance(target, ProductSet):
            self._spatial_tree = cKDTree(target.spatial.points)
            self.error_bound = 0.0
        elif isinstance(target, CloudSet):
            self._cloud_tree = cKDTree(target.points * 1.0)
            self.error_bound = 0.0
        else:
            raise TypeError(f"unsupported set type {type(target).__name__}")

    @property
    def ambient_dim(self) -> int:
        return self.target.ambient_dim

    def dist_spacetime(self, t, x) -> np.ndarray:
        """d_S at (t, x); t scalar or per-row, x of shape (..., n)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
        tg = self.target
        if isinstance(tg, GraphSet):
            return kr.graph_scan_dist(t, x, self._grid_times, self._sections)
        if isinstance(tg, ProductSet):
            dx, _ = self._spatial_tree.query(x)
            dt = tg.time_distance(t)
            return np.sqrt(dt * dt + dx * dx)
        pts = np.hstack([t[:, None], x])
        d, _ = self._cloud_tree.query(pts)
        return d

    def slice_clearance(self, t: float) -> float:
        """Certified lower bound for d_S(t, .) over all of space.

        Positive clearance proves the slice integrand is bounded. Products
        know the exact time-factor distance; graphs and clouds return a
        time-gap bound (zero for graphs, whose sections always exist).
        """
        tg = self.target
        if isinstance(tg, ProductSet):
            return float(tg.time_distance(np.asarray(t)))
        if isinstance(tg, CloudSet):
            return float(np.abs(tg.points[:, 0] - t).min())
        return 0.0

    def dist_section(self, t: float, x) -> np.ndarray:
        """Distance from x to the temporal section S(t)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        tg = self.target
        if isinstance(tg, GraphSet):
            sec = tg.temporal_section(float(t))
            return kr.min_dist(x, sec)
        sec = tg.temporal_section(float(t))
        if sec.shape[0] == 0:
            raise EmptySetError(f"empty section at t={t}")
        key = round(float(t), 12)
        tree = self._section_trees.get(key)
        if tree is None:
            tree = cKDTree(sec)
            self._section_trees[key] = tree
        d, _ = tree.query(x)
        return d


def neighborhood_measure(
    evaluator: DistanceEvaluator,
    t: float,
    epsilon: float,
    domain: Box,
    seed: int,
    samples: int = 200_000,
    target_stderr: float | None = None,
    t_index: int = 0,
) -> MeasureEstimate:
    """Hit-or-miss estimate of mu_n({x in domain : d_sec(t, x) < epsilon}).

    The sample stream is keyed by (seed, t_index) only, so estimates at one
    time slice reuse the same points for every epsilon: ladders are exactly
    monotone in epsilon and per-slice results are order-independent.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    sec = evaluator.target.temporal_section(t)
    if sec.shape[0] == 0:
        raise EmptySetError(f"empty section at t={t}")
    lo_needed = sec.min(axis=0) - epsilon
    hi_needed = sec.max(axis=0) + epsilon
    if np.any(lo_needed < domain.lo) or np.any(hi_needed > domain.hi):
        import warnings

        warnings.warn("domain does not contain the full epsilon-neighborhood", stacklevel=2)
    d = _slice_distances(evaluator, t, domain, seed, samples, t_index)
    hits = int((d < epsilon).sum())
    p = hits / samples
    value = domain.volume * p
    stderr = domain.volume * float(np.sqrt(p * (1.0 - p) / samples))
    low = target_stderr is not None and stderr > target_stderr
    return MeasureEstimate(value, stderr, samples, domain, low_confidence=bool(low))


def _slice_distances(
    evaluator: DistanceEvaluator,
    t: float,
    domain: Box,
    seed: int,
    samples: int,
    t_index: int,
) -> np.ndarray:
    gen = rng.stream(seed, "neighborhood", t_index)
    pts = domain.sample(gen, samples)
    return evaluator.dist_section(t, pts)


def sausage_length_1d(points: np.ndarray, epsilon: float) -> float:
    """Exact length of the union of [x - eps, x + eps] over a 1-d point set.

    Independent check for Monte Carlo sausage estimates.
    """
    xs = np.sort(np.asarray(points, dtype=float).ravel())
    lo = xs - epsilon
    hi = xs + epsilon
    total = 0.0
    cur_lo, cur_hi = lo[0], hi[0]
    for a, b in zip(lo[1:], hi[1:]):
        if a > cur_hi:
            total += cur_hi - cur_lo
            cur_lo, cur_hi = a, b
        else:
            cur_hi = max(cur_hi, b)
    total += cur_hi - cur_lo
    return total


@dataclass
class SectionBoundReport:
    samples: int
    violations_lower: int
    violations_upper: int
    worst_ratio: float       # max of d_sec / ((K+1) d_S^alpha)
    lipschitz_lower_checked: bool
    violations_lipschitz: int

    @property
    def total_violations(self) -> int:
        return self.violations_lower + self.violations_upper + self.violations_lipschitz


def check_section_bound(
    target: GraphSet,
    samples: int,
    seed: int,
    evaluator: DistanceEvaluator | None = None,
) -> SectionBoundReport:
    """Sample points with d_S < 1 and verify the two-sided section bound.

    Checks d_S <= d_sec <= (K+1) d_S^alpha within the evaluator's reported
    discretization error; for Lipschitz graphs (alpha = 1) additionally
    checks d_sec/(K+1) <= d_S. Violations are counted, not raised.
    """
    ev = evaluator if evaluator is not None else DistanceEvaluator(target)
    bundle = target.bundle
    alpha, K = bundle.holder_exponent, bundle.holder_constant
    gen = rng.stream(seed, "section-bound")
    box = target.bounding_box()
    lo = box.lo - 1.0
    hi = box.hi + 1.0
    wide = Box(lo, hi)
    n_kept = 0
    viol_lower = 0
    viol_upper = 0
    viol_lip = 0
    worst = 0.0
    tol = ev.error_bound + 1e-12
    batch = 8192
    while n_kept < samples:
        ts = gen.random(batch) * target.horizon
        xs = wide.sample(gen, batch)
        d_st = ev.dist_spacetime(ts, xs)
        keep = d_st < 1.0
        if not keep.any():
            continue
        ts_k, xs_k, d_k = ts[keep], xs[keep], d_st[keep]
        take = min(samples - n_kept, d_k.size)
        ts_k, xs_k, d_k = ts_k[:take], xs_k[:take], d_k[:take]
        d_sec = np.array([ev.dist_section(tk, xk[None, :])[0] for tk, xk in zip(ts_k, xs_k)])
        # sampled d_S overestimates the true one by at most `tol`
        viol_lower += int((d_k > d_sec + tol).sum())
        bound = (K + 1.0) * d_k ** alpha
        viol_upper += int((d_sec > bound + tol).sum())
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(bound > 0, d_sec / bound, 0.0)
        worst = max(worst, float(ratio.max()))
        if alpha == 1.0:
            viol_lip += int((d_sec / (K + 1.0) > d_k + tol).sum())
        n_kept += take
    return SectionBoundReport(
        samples=n_kept,
        violations_lower=viol_lower,
        violations_upper=viol_upper,
        worst_ratio=worst,
        lipschitz_lower_checked=(alpha == 1.0),
        violations_lipschitz=viol_lip,
    )
