"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines. Every
tolerance is pinned here; nothing is deferred to later calibration.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from fractalflow import _kernels as kr
from fractalflow import rng
from fractalflow import sets as st
from fractalflow.cli import main as cli_main
from fractalflow.conditions import sectional_exponent_threshold, wellposedness_check
from fractalflow.dimension import (
    estimate_box_dimension,
    estimate_minkowski_dimension,
    predicted_print_region,
    print_membership,
    print_scan,
)
from fractalflow.distance import DistanceEvaluator, check_section_bound
from fractalflow.fields import (
    FieldSpec,
    FixedTrajectory,
    PiecewiseLinearTrajectory,
    RotationBackground,
    VortexTerm,
    make_point_vortex_field,
    normal_component,
)
from fractalflow.flow import (
    avoidance_statistics,
    compressibility_estimate,
    distance_from_trajectories,
    integrate_flow,
    sample_initial,
)
from fractalflow.sets import Box, InitialSet
from fractalflow.transport import (
    SpaceTimeBump,
    gronwall_check,
    renormalization_residual,
    solve_transport,
)
from fractalflow.vortex_wave import simulate_vortex_wave

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def check(number: int, description: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {number:02d} [{status}] {description}"
          + (f" ({detail})" if detail else ""))
    assert ok, f"criterion {number}: {description} {detail}"


def gaussian(center, sigma):
    c = np.asarray(center, dtype=float)
    return lambda pts: np.exp(-((pts - c) ** 2).sum(axis=1) / (2 * sigma ** 2))


@pytest.fixture(scope="module")
def four_sets():
    cantor = st.make_cantor(0.25, 12)
    cc_base = st.make_cantor(0.25, 5)
    cc = np.stack(np.meshgrid(cc_base.points.ravel(), cc_base.points.ravel(),
                              indexing="ij"), axis=-1).reshape(-1, 2)
    cc = InitialSet(cc, 2, theoretical_dim=1.0, generator_tag="cantor-product",
                    resolution=cc_base.resolution)
    recip1 = st.make_reciprocal_powers(1.0, 10_000)
    recip2 = st.make_reciprocal_powers(2.0, 10_000)
    return cantor, cc, recip1, recip2


@pytest.fixture(scope="module")
def grid_fits(four_sets):
    cantor, cc, recip1, recip2 = four_sets
    started = time.perf_counter()
    lad1 = 4.0 ** -np.arange(2, 11, dtype=float)
    lad4 = 4.0 ** -np.arange(1, 6, dtype=float)
    fits = {
        "cantor": estimate_box_dimension(cantor, lad1).fitted_dim,
        "cxc": estimate_box_dimension(cc, lad4).fitted_dim,
        "recip1": estimate_box_dimension(recip1, lad1).fitted_dim,
        "recip2": estimate_box_dimension(recip2, lad1).fitted_dim,
    }
    return fits, time.perf_counter() - started


def test_criterion_01_dimension_values(grid_fits):
    fits, elapsed = grid_fits
    ok = (abs(fits["cantor"] - 0.5) <= 0.05
          and abs(fits["cxc"] - 1.0) <= 0.10
          and abs(fits["recip1"] - 0.5) <= 0.05
          and abs(fits["recip2"] - 1.0 / 3.0) <= 0.05
          and elapsed < 30.0)
    check(1, "box dimensions 0.5 / 1.0 / 0.5 / 0.333 within tolerance", ok,
          f"fits={ {k: round(v, 4) for k, v in fits.items()} }, {elapsed:.1f}s")


def test_criterion_02_cross_method_consistency(four_sets, grid_fits):
    cantor, cc, recip1, recip2 = four_sets
    lad_1d = 4.0 ** -np.arange(1, 7, dtype=float)
    lad_2d = 4.0 ** -np.arange(1, 6, dtype=float)
    configs = {
        "cantor": (cantor, lad_1d, Box([-0.5], [1.5])),
        "cxc": (cc, lad_2d, Box([-0.25, -0.25], [1.25, 1.25])),
        "recip1": (recip1, lad_1d, Box([-0.5], [1.5])),
        "recip2": (recip2, lad_1d, Box([-0.5], [1.5])),
    }
    diffs = {}
    fits, _ = grid_fits
    for i, (name, (points, ladder, domain)) in enumerate(configs.items()):
        ev = DistanceEvaluator(st.make_product((0.0, 1.0), points))
        mink = estimate_minkowski_dimension(ev, 0.5, ladder, domain,
                                            seed=31 + i, samples=400_000)
        diffs[name] = abs(mink.fitted_dim - fits[name])
    ok = all(d <= 0.1 for d in diffs.values())
    check(2, "grid-count and sausage estimates agree within 0.1", ok,
          f"diffs={ {k: round(v, 4) for k, v in diffs.items()} }")


def test_criterion_03_product_print_consistency():
    times = st.make_cantor(0.25, 8).points.ravel()
    space = st.make_cantor(0.25, 8)
    target = st.make_product(times, space, horizon=1.0)
    ev = DistanceEvaluator(target)
    domain = Box([-0.5], [1.5])
    scan = print_scan(ev, domain, 0.002, seed=42, time_slices=13,
                      eps_max=0.25, samples=40_000)
    grid = [1.0, 1.2, 1.5, 2.0, 3.0, 6.0]
    margin = 0.1
    inv = lambda v: 0.0 if math.isinf(v) else 1.0 / v
    contradictions = []
    for a in grid:
        for b in grid:
            empirical = print_membership(ev, a, b, domain, 0.002, 42, scan=scan)
            predicted = predicted_print_region(0.5, 0.5, 1, a, b)
            boundary_residual = abs(1.0 - (0.5 * inv(b) + 0.5 * inv(a)))
            if boundary_residual <= margin:
                continue  # margin band around alpha*beta = alpha/2 + beta/2
            bad = ((empirical.verdict == "member" and predicted == "nonmember")
                   or (empirical.verdict == "non_member" and predicted == "member"))
            if bad:
                contradictions.append((a, b, empirical.verdict, predicted))
    check(3, "empirical print never contradicts the product prediction "
             "outside the margin band", not contradictions,
          f"contradictions={contradictions}")


def test_criterion_04_holder_graph_membership_and_section_bound():
    base = st.make_cantor(0.25, 4).embed(2)
    bundle = st.TrajectoryBundle(
        lambda t, x: x + (abs(t) ** 0.5) * np.array([1.0, 0.0]),
        holder_exponent=0.5, holder_constant=1.0, horizon=1.0)
    graph = st.make_graph(base, bundle, seed=0)
    ev = DistanceEvaluator(graph, time_step=1 / 256)
    domain = Box([-0.5, -0.7], [2.1, 0.7])
    scan = print_scan(ev, domain, 0.05, seed=7, time_slices=9, eps_max=0.3,
                      samples=24_000, ladder_base=math.sqrt(2.0))
    verdict = print_membership(ev, 0.6, math.inf, domain, 0.05, 7, scan=scan)
    report = check_section_bound(graph, samples=100_000, seed=8, evaluator=ev)
    ok = verdict.verdict == "member" and report.total_violations == 0
    check(4, "Hoelder graph: (0.6, inf) member and section bound holds on 1e5 "
             "samples", ok,
          f"verdict={verdict.verdict}, violations={report.total_violations}")


def test_criterion_05_exponent_threshold_exact():
    q_bar = sectional_exponent_threshold(1.0, 0.0, 2)
    field = make_point_vortex_field(
        PiecewiseLinearTrajectory([0.0, 1.0], [[-0.2, 0.0], [0.3, 0.1]]), 1.0)
    target = st.make_product((0.0, 1.0), InitialSet(np.array([[0.0, 0.0]]), 2))
    report = wellposedness_check(field, target, p=1.0, q=3.0,
                                 holder_exponent=1.0, sup_section_dim=0.0,
                                 domain=Box([-1, -1], [1, 1]), seed=9,
                                 spatial_resolution=32, time_slices=5,
                                 sectional=True)
    ok = q_bar == 2.0 and report.threshold_q == 2.0
    check(5, "Lipschitz vortex threshold is exactly q_bar = 2", ok,
          f"q_bar={q_bar}, report={report.threshold_q}")


def test_criterion_06_normal_component_cancellation():
    field = make_point_vortex_field(FixedTrajectory([0.0, 0.0]), 1.0)
    target = st.make_product((0.0, 1.0), InitialSet(np.array([[0.0, 0.0]]), 2))
    ev = DistanceEvaluator(target)
    gen = rng.stream(77, "acceptance-cancellation")
    pts = np.empty((0, 2))
    while pts.shape[0] < 10_000:
        cand = gen.normal(size=(20_000, 2))
        cand = cand[np.linalg.norm(cand, axis=1) >= 0.1]
        pts = np.concatenate([pts, cand])
    pts = pts[:10_000]
    vals, _ = normal_component(field, ev, 0.4, pts, grad_step=1e-4)
    worst = float(np.abs(vals).max())
    check(6, "static vortex: |b . grad d| < 1e-5 on 1e4 points with d >= 0.1",
          worst < 1e-5, f"worst={worst:.2e}")


@pytest.fixture(scope="module")
def vortex_ensemble():
    started = time.perf_counter()
    traj = PiecewiseLinearTrajectory([0.0, 0.5, 1.0],
                                     [[-0.35, 0.0], [0.1, 0.25], [0.45, -0.05]])
    field = FieldSpec(RotationBackground(0.4, (0.0, 0.0)),
                      (VortexTerm(traj, 0.3, False),), horizon=1.0)
    domain = Box([-1.2, -1.2], [1.2, 1.2])
    x0, w = sample_initial(domain, 102_400, "grid", seed=11)
    dist = distance_from_trajectories([traj], 1.0, "sectional")
    keep = kr.eval_distance(dist, 0.0, x0) > 1e-6
    ens = integrate_flow(field, x0[keep], w[keep], np.linspace(0, 1, 17), dist,
                         h_max=1 / 256, delta_min=1e-6)
    return ens, domain, time.perf_counter() - started


def test_criterion_07_avoidance_bound(vortex_ensemble):
    ens, domain, integration_time = vortex_ensemble
    started = time.perf_counter() - integration_time
    boxes = [Box(lo, lo + 0.9) for lo in (np.array([-1.05, -1.05]),
                                          np.array([0.1, 0.1]),
                                          np.array([-1.0, 0.05]),
                                          np.array([0.05, -1.0]))]
    comp = compressibility_estimate(ens, boxes, times=ens.times[::4])
    deltas = 2.0 ** -np.arange(4, 11, dtype=float)
    report = avoidance_statistics(ens, 0.2, deltas, domain, comp.L, seed=12,
                                  samples=200_000, tolerance=0.1)
    elapsed = time.perf_counter() - started
    monotone = bool(np.all(np.diff(report.mu) <= 0))  # deltas descend
    ok = (ens.count >= 100_000 and monotone and report.all_bounded
          and elapsed < 300.0)
    check(7, "moving vortex: mu(F) monotone and product within bound * 1.1", ok,
          f"N={ens.count}, bound={report.bound:.3f}, "
          f"max product={report.product.max():.4f}, {elapsed:.0f}s")


def test_criterion_08_compressibility_divergence_free(vortex_ensemble):
    ens, domain, _ = vortex_ensemble
    boxes = [Box(lo, lo + 0.9) for lo in (np.array([-1.05, -1.05]),
                                          np.array([0.1, 0.1]),
                                          np.array([-1.0, 0.05]),
                                          np.array([0.05, -1.0]))]
    comp_vortex = compressibility_estimate(ens, boxes, times=ens.times[::4])

    rotation = FieldSpec(RotationBackground(1.0, (0.0, 0.0)), (), horizon=1.0)
    x0, w = sample_initial(domain, 102_400, "grid", seed=13)
    ens_rot = integrate_flow(rotation, x0, w, np.linspace(0, 1, 5), h_max=1 / 128)
    comp_rot = compressibility_estimate(ens_rot, boxes)
    ok = 0.95 <= comp_vortex.L <= 1.05 and 0.95 <= comp_rot.L <= 1.05
    check(8, "divergence-free flows report L in [0.95, 1.05]", ok,
          f"vortex L={comp_vortex.L:.4f}, rotation L={comp_rot.L:.4f}")


def test_criterion_09_renormalization_and_gronwall():
    domain = Box([-1.0, -1.0], [1.0, 1.0])
    field = FieldSpec(RotationBackground(1.0, (0.0, 0.0)), (), horizon=2 * math.pi)
    u0 = gaussian([0.35, 0.0], 0.2)
    bump = SpaceTimeBump(0.5, np.array([0.0, 0.0]), 0.4, np.array([0.6, 0.6]))
    residuals = []
    for res, steps in ((32, 16), (64, 32), (128, 64)):
        u = solve_transport(field, u0, domain, res, 1.0, steps,
                            interpolation="cubic")
        residuals.append(renormalization_residual(u, field, lambda z: z ** 2,
                                                  bump, u0=u0))
    order = math.log2(residuals[0] / residuals[2]) / 2.0
    decreasing = residuals[2] < residuals[1] < residuals[0]

    u_period = solve_transport(field, gaussian([0.4, 0.0], 0.16), domain, 96,
                               2 * math.pi, 128, interpolation="cubic")
    gw = gronwall_check(u_period, field)
    conservation = abs(gw.conservation_ratio - 1.0)
    ok = (decreasing and order >= 0.8 and gw.max_violation_margin <= 0.01
          and conservation <= 0.01)
    check(9, "renormalization residual order >= 0.8, gronwall margin <= 1%, "
             "energy within 1%", ok,
          f"order={order:.2f}, margin={gw.max_violation_margin:.2e}, "
          f"drift={conservation:.4f}")


def test_criterion_10_vortex_wave():
    gamma_vortex, gamma_particle, d = 1.0, 0.5, 0.5
    period = 2 * math.pi * d * d / (gamma_vortex + gamma_particle)
    result = simulate_vortex_wave(
        np.array([[d, 0.0]]), np.array([gamma_particle]), [0.0, 0.0],
        gamma_vortex, horizon=period, out_times=np.linspace(0, period, 17),
        blob_radius=0.005, h_max=period / 2048)
    # particle orbit radius 1/3: a 1% phase error displaces it by 0.021
    orbit_error = float(np.linalg.norm(result.snapshots[-1].positions[0]
                                       - [d, 0.0]))
    period_ok = orbit_error < 2 * math.pi / 3.0 * 0.01

    ang = 2 * np.pi * np.arange(64) / 64
    ring = 0.3 * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    wr = np.full(64, 0.8 / 64) * (1 + 0.25 * np.sin(np.arange(64)))
    sym = simulate_vortex_wave(ring, wr, [0.0, 0.0], 1.0, horizon=0.5,
                               blob_radius=0.05, h_max=1 / 512)
    totals = [s.total_vorticity for s in sym.snapshots]
    vorticity_exact = all(t == totals[0] for t in totals)
    drift = float(np.linalg.norm(sym.vortex_path - sym.vortex_path[0],
                                 axis=1).max())
    drift_ok = drift < sym.blob_radius
    ok = period_ok and vorticity_exact and drift_ok
    check(10, "two-vortex period within 1%, vorticity exact, symmetric drift "
              "below blob radius", ok,
          f"orbit_err={orbit_error:.4f}, drift={drift:.2e}")


def test_criterion_11_deterministic_rerun(tmp_path):
    def run(out):
        code = cli_main(["all", "--config",
                         str(SCENARIOS / "dimension_cantor.json"),
                         "--out", str(out)])
        assert code == 0

    def tree(root):
        out = {}
        for path in sorted(Path(root).rglob("*")):
            if path.is_dir():
                continue
            rel = path.relative_to(root).as_posix()
            if path.name == "manifest.json":
                payload = json.loads(path.read_text())
                payload.pop("wall_time_seconds", None)  # documented exception
                out[rel] = json.dumps(payload, sort_keys=True)
            else:
                out[rel] = path.read_bytes()
        return out

    run(tmp_path / "a")
    run(tmp_path / "b")
    ok = tree(tmp_path / "a") == tree(tmp_path / "b")
    check(11, "scenario re-run with the same seed is bit-identical", ok)
