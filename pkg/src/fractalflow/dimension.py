"""Box-counting dimension estimation and codimension-print tests.

Upper/lower box-counting dimensions are the limsup/liminf of
log N(A, eps) / -log eps where N is the smallest number of diameter-eps
sets covering A. The Minkowski-sausage form trades N for the Lebesgue
measure of the eps-neighborhood: dim = n - slope of log mu vs log eps.

The codimension print of a space-time set S collects the exponent pairs
(alpha, beta) with 1/d_S in L^beta in time, L^alpha_loc in space: an
anisotropic record of how small S is. Membership here is decided from
scaling-exponent fits of the slice neighborhoods, not raw quadrature of
d_S**-alpha, which cannot distinguish member from non-member at any
numerical floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .distance import DistanceEvaluator
from .sets import Box, InitialSet


def box_count(points, epsilon: float) -> int:
    """Number of diameter-epsilon boxes needed to cover the point set.

    In one dimension this is the exact minimal interval cover (greedy sweep
    over sorted points). In higher dimensions it counts occupied cells of an
    axis-aligned grid with mesh epsilon/sqrt(n) anchored at the coordinate
    minimum, so each cell has diameter exactly epsilon.
    """
    pts = _as_points(points)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    n = pts.shape[1]
    spread = pts.max(axis=0) - pts.min(axis=0)
    if float(np.linalg.norm(spread)) <= epsilon:
        return 1
    if n == 1:
        xs = np.sort(pts[:, 0])
        count = 0
        cover_end = -np.inf
        for x in xs:
            if x > cover_end:
                count += 1
                cover_end = x + epsilon
        return count
    mesh = epsilon / math.sqrt(n)
    idx = np.floor((pts - pts.min(axis=0)) / mesh).astype(np.int64)
    return int(np.unique(idx, axis=0).shape[0])


def _as_points(points) -> np.ndarray:
    if isinstance(points, InitialSet):
        return points.points
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] == 0:
        raise ValueError("empty point set")
    return pts


@dataclass
class DimensionEstimate:
    fitted_dim: float
    upper_proxy: float     # from the extreme local slope
    lower_proxy: float
    r_squared: float
    scale_window: tuple[float, float]
    method: str
    low_confidence: bool = False

    def __post_init__(self):
        if not (self.lower_proxy <= self.fitted_dim <= self.upper_proxy):
            raise ValueError("fitted dimension outside its local-slope bracket")


def _fit_loglog(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float, float]:
    """Least-squares slope, intercept, r^2 and slope standard error."""
    a = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    pred = a @ coef
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    sxx = float(((x - x.mean()) ** 2).sum())
    m = x.size
    stderr = math.sqrt(ss_res / (m - 2) / sxx) if m > 2 and sxx > 0 else 0.0
    return slope, intercept, r2, stderr


def dyadic_ladder(eps_max: float, eps_min: float, base: float = 2.0) -> np.ndarray:
    """Decreasing geometric scale ladder covering [eps_min, eps_max]."""
    k = int(math.floor(math.log(eps_max / eps_min, base))) + 1
    return eps_max * base ** (-np.arange(k, dtype=float))


def estimate_box_dimension(points, ladder) -> DimensionEstimate:
    """Least-squares box-counting dimension over the scale ladder.

    Scales below an InitialSet's construction resolution are dropped (the
    prefractal looks zero-dimensional there). Upper/lower proxies are the
    extreme local slopes between consecutive scales.
    """
    pts = _as_points(points)
    ladder = np.sort(np.asarray(ladder, dtype=float))[::-1]
    if isinstance(points, InitialSet) and points.resolution > 0:
        keep = ladder >= points.resolution
        if keep.sum() >= 4:
            ladder = ladder[keep]
    if ladder.size < 4:
        raise ValueError("need at least 4 scales inside the validity window")
    counts = np.array([box_count(pts, e) for e in ladder], dtype=float)
    if np.unique(counts).size < 2:
        raise ValueError("degenerate ladder: counts do not vary")
    x = -np.log(ladder)
    y = np.log(counts)
    slope, _, r2, _ = _fit_loglog(x, y)
    local = np.diff(y) / np.diff(x)
    return DimensionEstimate(
        fitted_dim=slope,
        upper_proxy=float(local.max()),
        lower_proxy=float(local.min()),
        r_squared=r2,
        scale_window=(float(ladder.min()), float(ladder.max())),
        method="grid_count",
    )


def estimate_minkowski_dimension(
    evaluator: DistanceEvaluator,
    t: float,
    ladder,
    domain: Box,
    seed: int,
    samples: int = 200_000,
    t_index: int = 0,
    min_hits: int = 32,
) -> DimensionEstimate:
    """Sausage-scaling dimension: n minus the slope of log mu vs log eps.

    One Monte Carlo point batch per time slice serves every scale, so the
    measure ladder is exactly monotone. Scales with fewer than `min_hits`
    Monte Carlo hits carry no fit information and are dropped; fits with
    r^2 < 0.9 are flagged low_confidence.
    """
    ladder = np.sort(np.asarray(ladder, dtype=float))[::-1]
    if ladder.size < 4:
        raise ValueError("need at least 4 scales")
    gen = rng.stream(seed, "minkowski", t_index)
    pts = domain.sample(gen, samples)
    d = evaluator.dist_section(t, pts)
    hits = np.array([(d < e).sum() for e in ladder])
    mu = hits / samples * domain.volume
    keep = hits >= min_hits
    if keep.sum() < 4:
        raise ValueError("too few scales with enough sausage hits")
    x = np.log(ladder[keep])
    y = np.log(mu[keep])
    slope, _, r2, _ = _fit_loglog(x, y)
    n = domain.dim
    local = np.diff(y) / np.diff(x)
    return DimensionEstimate(
        fitted_dim=n - slope,
        upper_proxy=n - float(local.min()),
        lower_proxy=n - float(local.max()),
        r_squared=r2,
        scale_window=(float(ladder[keep].min()), float(ladder[keep].max())),
        method="minkowski",
        low_confidence=bool(r2 < 0.9),
    )


# ---------------------------------------------------------------------------
# codimension print


@dataclass
class SliceScaling:
    """Scaling data of one time slice of the space-time distance."""

    t: float
    gamma: float            # mu({d_S(t,.) < eps}) ~ eps**gamma; inf if slice is far
    gamma_stderr: float
    r_squared: float
    classification: str     # 'finite' | 'infinite' | 'undecided'
    low_confidence: bool
    norm_estimate: float    # floor-clipped quadrature of d**-alpha (evidence only)


@dataclass
class PrintScan:
    """Per-slice distance samples and sausage ladders, reusable across
    exponent pairs."""

    times: np.ndarray
    ladder: np.ndarray
    distances: list          # per slice, sampled d_S(t, .) over the domain
    volume: float
    clearances: np.ndarray   # certified lower bound of each slice distance
    min_hits: int = 8

    def slice_measures(self, k: int) -> np.ndarray:
        d = self.distances[k]
        return np.array([(d < e).mean() * self.volume for e in self.ladder])


def print_scan(
    evaluator: DistanceEvaluator,
    domain: Box,
    eps_floor: float,
    seed: int,
    time_slices: int = 13,
    eps_max: float = 0.25,
    samples: int = 100_000,
    ladder_base: float = 2.0,
) -> PrintScan:
    """Sample d_S(t, .) on an inclusive time grid; one stream per slice."""
    if eps_floor <= evaluator.error_bound:
        raise ValueError("eps_floor must exceed the evaluator error bound")
    T = evaluator.target.horizon
    ts = np.linspace(0.0, T, time_slices)
    ladder = dyadic_ladder(eps_max, eps_floor, ladder_base)
    distances = []
    clearances = np.empty(ts.size)
    for k, t in enumerate(ts):
        gen = rng.stream(seed, "print-slice", k)
        pts = domain.sample(gen, samples)
        distances.append(evaluator.dist_spacetime(float(t), pts))
        clearances[k] = evaluator.slice_clearance(float(t))
    return PrintScan(ts, ladder, distances, domain.volume, clearances)


@dataclass
class PrintVerdict:
    alpha: float
    beta: float
    verdict: str            # 'member' | 'non_member' | 'inconclusive'
    slices: list
    time_agg_exponent: float
    margin: float

    @property
    def gamma_summary(self) -> tuple[float, float, float]:
        finite = [s.gamma for s in self.slices if np.isfinite(s.gamma)]
        if not finite:
            return (np.inf, np.inf, np.inf)
        return (float(min(finite)), float(np.mean(finite)), float(max(finite)))


def print_membership(
    evaluator: DistanceEvaluator,
    alpha: float,
    beta: float,
    domain: Box,
    eps_floor: float,
    seed: int,
    time_slices: int = 13,
    eps_max: float = 0.25,
    samples: int = 100_000,
    margin: float = 0.1,
    scan: PrintScan | None = None,
) -> PrintVerdict:
    """Empirical membership test of (alpha, beta) in the codimension print.

    For each t on an inclusive grid, the slice measure mu({x : d_S(t, x) <
    eps}) is fitted to eps**gamma(t) over scales with at least `min_hits`
    Monte Carlo hits; the spatial integral of d_S(t, .)**-alpha is declared
    locally finite when alpha < gamma(t) - margin and infinite when
    alpha > gamma(t) + margin. Slices whose sampled neighborhood is empty at
    every scale are finite outright. Aggregation over t uses beta: grid
    maximum (essential-supremum proxy) for beta = inf; for finite beta the
    discrete time norm is additionally required to be stable under grid
    refinement. Any low-confidence slice fit makes the verdict
    inconclusive. Pass a precomputed `scan` to classify many exponent pairs
    against one sampling pass.

    Exponents in (0, 1) are accepted: the scaling machinery is insensitive
    to the restriction the well-posedness pairing imposes on its own
    exponents.
    """
    if not (alpha > 0.0) or not (beta > 0.0):
        raise ValueError("exponents must be positive")
    if scan is None:
        scan = print_scan(evaluator, domain, eps_floor, seed,
                          time_slices=time_slices, eps_max=eps_max, samples=samples)
    slices = [
        _classify_slice(scan, k, alpha, margin)
        for k in range(scan.times.size)
    ]
    n_inf = sum(1 for s in slices if s.classification == "infinite")
    n_und = sum(1 for s in slices if s.classification == "undecided")
    low = any(s.low_confidence for s in slices)

    agg_exponent = 0.0
    if np.isfinite(beta):
        T = float(scan.times[-1] - scan.times[0]) or 1.0
        norm_coarse = _time_norm([s.norm_estimate for s in slices[::2]], T, beta)
        norm_fine = _time_norm([s.norm_estimate for s in slices], T, beta)
        if norm_coarse > 0 and norm_fine > 0:
            agg_exponent = float(np.log2(norm_fine / norm_coarse))

    if low:
        verdict = "inconclusive"
    elif n_inf > 0:
        verdict = "non_member"
    elif n_und > 0:
        verdict = "inconclusive"
    elif np.isfinite(beta) and abs(agg_exponent) > 0.5:
        verdict = "inconclusive"
    else:
        verdict = "member"
    return PrintVerdict(alpha, beta, verdict, slices, agg_exponent, margin)


def _classify_slice(scan: PrintScan, k: int, alpha: float, margin: float) -> SliceScaling:
    t = float(scan.times[k])
    d = scan.distances[k]
    mu = scan.slice_measures(k)
    samples = d.size
    floor = float(scan.ladder.min())
    norm_est = float(np.mean(np.maximum(d, floor) ** (-alpha)) * scan.volume)
    if scan.clearances[k] > floor:
        # the slice provably stays clear of the set: bounded integrand
        return SliceScaling(t, np.inf, 0.0, 1.0, "finite", False, norm_est)
    # scales below the Poisson floor carry no fit information
    usable = mu * samples / scan.volume >= scan.min_hits
    if not mu.any():
        return SliceScaling(t, np.inf, 0.0, 1.0, "finite", False, norm_est)
    if usable.sum() < 3:
        return SliceScaling(t, np.nan, 0.0, 0.0, "undecided", True, norm_est)
    x = np.log(scan.ladder[usable])
    y = np.log(mu[usable])
    gamma, _, r2, gamma_stderr = _fit_loglog(x, y)
    low = bool(r2 < 0.9)
    if alpha < gamma - margin:
        cls = "finite"
    elif alpha > gamma + margin:
        cls = "infinite"
    else:
        cls = "undecided"
    return SliceScaling(t, gamma, gamma_stderr, r2, cls, low, norm_est)


def _time_norm(values, horizon: float, beta: float) -> float:
    vals = np.asarray(values, dtype=float)
    dt = horizon / max(vals.size - 1, 1)
    return float((np.sum(vals ** beta) * dt) ** (1.0 / beta))


def _inv(v: float) -> float:
    return 0.0 if np.isinf(v) else 1.0 / v


def predicted_print_region(
    dim_time: float,
    dim_space: float,
    n: int,
    alpha: float,
    beta: float,
    dim_time_lower: float | None = None,
    dim_space_lower: float | None = None,
) -> str:
    """Product-set print prediction from the factor dimensions.

    Membership holds if alpha < n - dim_space, or beta < 1 - dim_time, or
    alpha*beta < alpha*(1 - dim_time) + beta*(n - dim_space); non-membership
    if the last inequality reverses with the lower dimensions. Exactly
    self-similar factors use the same value both ways. The comparisons are
    evaluated in reciprocal form so infinite exponents are exact.
    """
    dt_lo = dim_time if dim_time_lower is None else dim_time_lower
    da_lo = dim_space if dim_space_lower is None else dim_space_lower
    if alpha < n - dim_space or beta < 1.0 - dim_time:
        return "member"
    mixed_upper = (1.0 - dim_time) * _inv(beta) + (n - dim_space) * _inv(alpha)
    if mixed_upper > 1.0:
        return "member"
    mixed_lower = (1.0 - dt_lo) * _inv(beta) + (n - da_lo) * _inv(alpha)
    if mixed_lower < 1.0:
        return "nonmember"
    return "undecided"


def isotropic_print_bound(
    dim_upper: float,
    dim_lower: float,
    spacetime_dim: int,
    alpha: float,
) -> str:
    """Diagonal print prediction from the space-time box dimensions.

    (alpha, alpha) is a member when alpha < (n+1) - dim_upper and a
    non-member when alpha > (n+1) - dim_lower; undecided in between.
    """
    if dim_lower > dim_upper:
        raise ValueError("lower dimension exceeds upper dimension")
    if alpha < spacetime_dim - dim_upper:
        return "member"
    if alpha > spacetime_dim - dim_lower:
        return "nonmember"
    return "undecided"
