"""Ensemble integration, compressibility, avoidance and Lyapunov traces."""

import math

import numpy as np
import pytest

from fractalflow import _kernels as kr
from fractalflow import rng
from fractalflow.fields import (
    CircularTrajectory,
    FieldSpec,
    FixedTrajectory,
    LinearBackground,
    PiecewiseLinearTrajectory,
    RadialBackground,
    RotationBackground,
    ZeroBackground,
    make_point_vortex_field,
)
from fractalflow.flow import (
    avoidance_statistics,
    compressibility_estimate,
    distance_from_static_points,
    distance_from_trajectories,
    g_avoidance,
    integral_residual,
    integrate_flow,
    lyapunov_trace,
    sample_initial,
)
from fractalflow.sets import Box

ORIGIN_DIST = distance_from_static_points(np.array([[0.0, 0.0]]))


def rotation_field(omega=1.0):
    return FieldSpec(RotationBackground(omega, (0.0, 0.0)), (), horizon=10.0)


class TestIntegrateFlow:
    def test_zero_field_is_identity(self):
        field = FieldSpec(ZeroBackground(2), ())
        x0 = np.array([[0.3, -0.2], [1.0, 2.0]])
        ens = integrate_flow(field, x0, np.ones(2), np.linspace(0, 1, 5))
        assert np.allclose(ens.positions[-1], x0)
        assert (ens.status == 0).all()

    def test_rotation_returns_after_full_period(self):
        T = 2 * math.pi
        ens = integrate_flow(rotation_field(), np.array([[1.0, 0.0]]), np.ones(1),
                             np.linspace(0, T, 9), h_max=T / 4096)
        assert np.linalg.norm(ens.positions[-1, 0] - [1.0, 0.0]) < 1e-6

    def test_static_vortex_orbit(self):
        # unnormalized unit vortex: angular speed 1/r^2, period 2 pi r^2
        r = 0.5
        field = make_point_vortex_field(FixedTrajectory([0.0, 0.0]), 1.0)
        period = 2 * math.pi * r * r
        ens = integrate_flow(field, np.array([[r, 0.0]]), np.ones(1),
                             np.linspace(0, period, 9),
                             distance=ORIGIN_DIST, h_max=period / 4096)
        radii = np.linalg.norm(ens.positions[:, 0, :], axis=1)
        assert np.abs(radii - r).max() / r < 1e-3  # drift < 0.1% per revolution
        assert np.linalg.norm(ens.positions[-1, 0] - [r, 0.0]) < 1e-3

    def test_integral_equation_residual(self):
        ens = integrate_flow(rotation_field(), np.array([[0.7, 0.1], [0.2, -0.5]]),
                             np.ones(2), np.linspace(0, 1, 129), h_max=1 / 512)
        res, resolved = integral_residual(ens)
        assert resolved.all()
        assert res.max() < 1e-3

    def test_residual_marks_unresolved_fast_orbits(self):
        # 9 output frames cannot resolve a tight vortex orbit (156 rad/s at
        # radius 0.08); the check must say so instead of reporting a bogus
        # residual, while the slow outer orbit stays checkable
        field = make_point_vortex_field(FixedTrajectory([0.0, 0.0]), 1.0)
        ens = integrate_flow(field, np.array([[0.08, 0.0], [0.9, 0.0]]),
                             np.ones(2), np.linspace(0, 1, 9),
                             distance=ORIGIN_DIST, h_max=1 / 256)
        res, resolved = integral_residual(ens)
        assert not resolved[0]
        assert resolved[1]
        assert res[1] < 1e-3

    def test_absorption_at_floor(self):
        field = FieldSpec(RadialBackground(-1.0, 2), ())
        ens = integrate_flow(field, np.array([[0.5, 0.0]]), np.ones(1),
                             np.linspace(0, 1, 5), distance=ORIGIN_DIST,
                             delta_min=1e-4)
        assert ens.status[0] == 1  # absorbed at the distance floor
        assert ens.global_min[0] < 1e-4
        assert 0.4 < ens.event_time[0] < 0.6

    def test_escape_box(self):
        field = FieldSpec(LinearBackground(np.eye(2)), ())
        ens = integrate_flow(field, np.array([[1.0, 0.0]]), np.ones(1),
                             np.linspace(0, 3, 7),
                             escape_box=Box([-2, -2], [2, 2]))
        assert ens.status[0] == 3
        # exponential flow leaves |x| = 2 at t = log 2
        assert ens.event_time[0] == pytest.approx(math.log(2.0), abs=0.02)

    def test_initial_point_inside_floor_rejected(self):
        field = FieldSpec(ZeroBackground(2), ())
        with pytest.raises(ValueError, match="outside"):
            integrate_flow(field, np.array([[0.0, 1e-9]]), np.ones(1),
                           np.linspace(0, 1, 3), distance=ORIGIN_DIST)

    def test_deterministic_rerun(self):
        field = make_point_vortex_field(
            CircularTrajectory((0.0, 0.0), 0.3, 1.5), 0.5,
            background=RotationBackground(0.7, (0.0, 0.0)))
        x0, w = sample_initial(Box([-1, -1], [1, 1]), 400, "mc", seed=5)
        dist = distance_from_trajectories([field.vortices[0].trajectory], 1.0)
        a = integrate_flow(field, x0, w, np.linspace(0, 1, 9), dist)
        b = integrate_flow(field, x0, w, np.linspace(0, 1, 9), dist)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.global_min, b.global_min)


class TestDistanceSources:
    def test_sectional_matches_formula(self):
        traj = PiecewiseLinearTrajectory([0.0, 1.0], [[0.0, 0.0], [0.5, 0.0]])
        dist = distance_from_trajectories([traj], 1.0, "sectional")
        d = kr.eval_distance(dist, 0.5, np.array([[1.0, 0.0]]))
        assert d[0] == pytest.approx(0.75)

    def test_spacetime_scan_against_dense_oracle(self):
        traj = CircularTrajectory((0.0, 0.0), 0.4, 3.0)
        dist = distance_from_trajectories([traj], 1.0, "spacetime",
                                          scan_step=1 / 8192)
        gen = rng.stream(7, "scan-oracle")
        pts = gen.normal(size=(50, 2))
        ts = gen.random(50)
        d = kr.eval_distance(dist, ts, pts)
        s = np.linspace(0, 1, 20001)
        zs = np.stack([0.4 * np.cos(3 * s), 0.4 * np.sin(3 * s)], axis=1)
        for i in range(50):
            oracle = np.sqrt((ts[i] - s) ** 2
                             + ((pts[i] - zs) ** 2).sum(axis=1)).min()
            assert d[i] == pytest.approx(oracle, abs=2e-4)


class TestCompressibility:
    def test_identity_flow(self):
        field = FieldSpec(ZeroBackground(2), ())
        x0, w = sample_initial(Box([-1, -1], [1, 1]), 40_000, "grid", seed=0)
        ens = integrate_flow(field, x0, w, np.linspace(0, 1, 3))
        boxes = [Box([-0.5, -0.5], [0.3, 0.3]), Box([0.0, 0.0], [0.8, 0.6])]
        report = compressibility_estimate(ens, boxes)
        assert report.L == pytest.approx(1.0, abs=0.02)

    def test_rotation_preserves_volume(self):
        x0, w = sample_initial(Box([-1, -1], [1, 1]), 90_000, "grid", seed=0)
        ens = integrate_flow(rotation_field(), x0, w, np.linspace(0, 1, 5),
                             h_max=1 / 128)
        boxes = [Box([-0.4, -0.4], [0.4, 0.4]), Box([-0.1, -0.5], [0.5, 0.1])]
        report = compressibility_estimate(ens, boxes)
        assert 0.95 <= report.L <= 1.05

    def test_expanding_flow_preimages_shrink(self):
        # b = (x1, 0): preimage of a fixed box has measure e^-t * |B|
        field = FieldSpec(LinearBackground(np.array([[1.0, 0.0], [0.0, 0.0]])), ())
        x0, w = sample_initial(Box([-2, -1], [2, 1]), 160_000, "grid", seed=0)
        ens = integrate_flow(field, x0, w, np.linspace(0, 1, 3), h_max=1 / 256)
        box = Box([-0.5, -0.5], [0.5, 0.5])
        report = compressibility_estimate(ens, [box])
        ratios = {row[0]: row[2] for row in report.rows}
        assert ratios[0.0] == pytest.approx(1.0, abs=0.03)
        assert ratios[0.5] == pytest.approx(math.exp(-0.5), abs=0.03)
        assert ratios[1.0] == pytest.approx(math.exp(-1.0), abs=0.03)
        assert report.L == pytest.approx(1.0, abs=0.03)  # attained at t = 0

    def test_low_hit_boxes_flagged(self):
        field = FieldSpec(ZeroBackground(2), ())
        x0, w = sample_initial(Box([-1, -1], [1, 1]), 400, "grid", seed=0)
        ens = integrate_flow(field, x0, w, np.linspace(0, 1, 3))
        report = compressibility_estimate(
            ens, [Box([0.9, 0.9], [0.99, 0.99])], min_hits=100)
        assert report.flagged_boxes >= 1


class TestAvoidance:
    def test_static_vortex_orbits_never_enter(self):
        field = make_point_vortex_field(FixedTrajectory([0.0, 0.0]), 1.0)
        domain = Box([-1, -1], [1, 1])
        x0, w = sample_initial(domain, 4000, "grid", seed=0)
        keep = np.linalg.norm(x0, axis=1) > 0.05
        dist = distance_from_trajectories([FixedTrajectory([0.0, 0.0])], 1.0)
        ens = integrate_flow(field, x0[keep], w[keep], np.linspace(0, 1, 9),
                             dist, h_max=1 / 256)
        report = avoidance_statistics(ens, 0.25, 2.0 ** -np.arange(4, 9),
                                      domain, compressibility=1.0, seed=1)
        assert report.mu.max() == 0.0
        assert report.all_bounded

    def test_radial_inflow_enters_and_breaks_the_bound(self):
        # every trajectory with |x0| < T + delta reaches the delta-tube; the
        # occupied measure does not vanish, so the product grows like
        # log(1/delta) and must eventually violate the bound: the flow has
        # no finite compressibility constant (mass concentrates at 0), which
        # is exactly the hypothesis failure the report exposes
        field = FieldSpec(RadialBackground(-1.0, 2), ())
        domain = Box([-1.5, -1.5], [1.5, 1.5])
        x0, w = sample_initial(domain, 22_500, "grid", seed=0)
        keep = np.linalg.norm(x0, axis=1) > 2e-3
        dist = ORIGIN_DIST
        r0 = 0.25
        ens = integrate_flow(field, x0[keep], w[keep], np.linspace(0, 1, 9),
                             dist, h_max=1 / 256, delta_min=1e-6)
        deltas = 2.0 ** -np.arange(4, 15, 2)
        comp = compressibility_estimate(
            ens, [Box([0.3, 0.3], [0.7, 0.7]), Box([-0.6, -0.2], [-0.2, 0.2])])
        report = avoidance_statistics(ens, r0, deltas, domain,
                                      compressibility=comp.L, seed=2)
        # exact straight-line characteristics: mu(F(delta)) ~ pi((T+d)^2 - r0^2)
        for delta, mu in zip(report.deltas, report.mu):
            oracle = math.pi * ((1.0 + delta) ** 2 - r0 ** 2)
            assert mu == pytest.approx(oracle, rel=0.05)
        assert not report.all_bounded
        assert not report.bound_ok[-1]

    def test_nesting_is_exact(self):
        field = make_point_vortex_field(
            PiecewiseLinearTrajectory([0.0, 0.5, 1.0],
                                      [[-0.3, 0.0], [0.2, 0.2], [0.5, -0.1]]),
            0.4, background=RotationBackground(0.5, (0.0, 0.0)))
        domain = Box([-1, -1], [1, 1])
        x0, w = sample_initial(domain, 10_000, "mc", seed=3)
        dist = distance_from_trajectories([field.vortices[0].trajectory], 1.0)
        d0 = kr.eval_distance(dist, 0.0, x0)
        keep = d0 > 1e-3
        ens = integrate_flow(field, x0[keep], w[keep], np.linspace(0, 1, 9),
                             dist, h_max=1 / 256)
        report = avoidance_statistics(ens, 0.2, 2.0 ** -np.arange(4, 11),
                                      domain, compressibility=1.0, seed=4)
        assert np.all(np.diff(report.mu) <= 0)  # deltas descend, mu descends

    def test_ladder_must_stay_below_r0(self):
        field = FieldSpec(ZeroBackground(2), ())
        x0, w = sample_initial(Box([-1, -1], [1, 1]), 100, "grid", seed=0)
        ens = integrate_flow(field, x0, w, np.linspace(0, 1, 3),
                             ORIGIN_DIST)
        with pytest.raises(ValueError, match="below r0"):
            avoidance_statistics(ens, 0.1, np.array([0.2]), Box([-1, -1], [1, 1]),
                                 1.0)


class TestLyapunov:
    def test_g_values(self):
        assert g_avoidance(math.exp(-1.0), 1.0, 1e-4) == pytest.approx(1.0)
        assert g_avoidance(2.0, 1.0, 1e-4) == 0.0

    def test_static_vortex_distance_constant(self):
        field = make_point_vortex_field(FixedTrajectory([0.0, 0.0]), 1.0)
        ens = integrate_flow(field, np.array([[0.5, 0.0]]), np.ones(1),
                             np.linspace(0, 1, 17), ORIGIN_DIST,
                             h_max=1 / 512)
        trace = lyapunov_trace(ens, 0, r0=1.0, delta=1e-4)
        assert np.abs(trace.quotient).max() < 1e-3
        assert trace.fraction_within == 1.0

    def test_radial_inflow_quotient_one(self):
        field = FieldSpec(RadialBackground(-1.0, 2), ())
        ens = integrate_flow(field, np.array([[1.4, 0.0]]), np.ones(1),
                             np.linspace(0, 0.5, 9), ORIGIN_DIST,
                             h_max=1 / 512)
        trace = lyapunov_trace(ens, 0, r0=1.0, delta=1e-4)
        assert trace.quotient == pytest.approx(np.ones_like(trace.quotient), abs=1e-6)
        assert trace.fraction_within == 1.0

    def test_dead_trajectory_rejected(self):
        field = FieldSpec(RadialBackground(-1.0, 2), ())
        ens = integrate_flow(field, np.array([[0.3, 0.0]]), np.ones(1),
                             np.linspace(0, 1, 5), ORIGIN_DIST, delta_min=1e-4)
        with pytest.raises(ValueError, match="alive"):
            lyapunov_trace(ens, 0, r0=1.0, delta=1e-4)


class TestSampling:
    def test_grid_weights_sum_to_volume(self):
        domain = Box([-1, -1], [1, 3])
        pts, w = sample_initial(domain, 1000, "grid", seed=0)
        assert w.sum() == pytest.approx(domain.volume)
        assert domain.contains(pts).all()

    def test_mc_weights_sum_to_volume(self):
        domain = Box([0, 0], [2, 1])
        pts, w = sample_initial(domain, 777, "mc", seed=1)
        assert w.sum() == pytest.approx(domain.volume)
        assert pts.shape == (777, 2)
