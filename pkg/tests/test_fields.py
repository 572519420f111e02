"""Point-vortex fields, normal components and mixed-norm estimates."""

import math

import numpy as np
import pytest

from fractalflow import rng
from fractalflow import sets as st
from fractalflow.distance import DistanceEvaluator
from fractalflow.fields import (
    CircularTrajectory,
    FieldSpec,
    FixedTrajectory,
    LinearBackground,
    PiecewiseLinearTrajectory,
    PowerDriftTrajectory,
    RadialBackground,
    RotationBackground,
    SingularPointError,
    UniformBackground,
    VortexTerm,
    ZeroBackground,
    eval_field,
    make_point_vortex_field,
    mixed_norm_estimate,
    normal_component,
)
from fractalflow.sets import Box


def static_vortex(gamma=1.0, normalized=False):
    return make_point_vortex_field(FixedTrajectory([0.0, 0.0]), gamma,
                                   normalized=normalized)


def segment_evaluator_2d():
    base = st.InitialSet(np.array([[0.0, 0.0]]), 2)
    return DistanceEvaluator(st.make_product((0.0, 1.0), base))


class TestVortexKernel:
    def test_unit_offset_vortex(self):
        field = make_point_vortex_field(FixedTrajectory([1.0, 0.0]), 1.0)
        assert eval_field(field, 0.3, [[0.0, 0.0]])[0] == pytest.approx([0.0, -1.0])

    def test_circular_speed_is_inverse_radius(self):
        field = static_vortex()
        for r in (0.5, 1.0, 2.0):
            v = eval_field(field, 0.0, [[r, 0.0]])[0]
            assert v == pytest.approx([0.0, 1.0 / r])

    def test_normalization_flag(self):
        v_raw = eval_field(static_vortex(), 0.0, [[1.0, 0.0]])[0]
        v_norm = eval_field(static_vortex(normalized=True), 0.0, [[1.0, 0.0]])[0]
        assert v_norm == pytest.approx(v_raw / (2 * math.pi))

    def test_divergence_free_by_finite_differences(self):
        field = static_vortex()
        x = np.array([0.3, 0.4])
        h = 1e-5
        div = 0.0
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            div += (eval_field(field, 0.0, [x + e])[0][j]
                    - eval_field(field, 0.0, [x - e])[0][j]) / (2 * h)
        assert abs(div) < 1e-6

    def test_divergence_free_random_sample(self):
        field = static_vortex()
        gen = rng.stream(3, "divfree")
        pts = gen.normal(size=(12_000, 2))
        pts = pts[np.linalg.norm(pts, axis=1) >= 0.1][:10_000]
        h = 1e-5
        div = np.zeros(pts.shape[0])
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            div += (eval_field(field, 0.0, pts + e)[:, j]
                    - eval_field(field, 0.0, pts - e)[:, j]) / (2 * h)
        assert np.abs(div).max() < 1e-5

    def test_singular_point_raises(self):
        with pytest.raises(SingularPointError):
            eval_field(static_vortex(), 0.0, [[0.0, 0.0]])

    def test_two_vortex_superposition(self):
        d = 0.7
        field = FieldSpec(ZeroBackground(2), (
            VortexTerm(FixedTrajectory([d, 0.0]), 1.0),
            VortexTerm(FixedTrajectory([-d, 0.0]), -1.0),
        ))
        v = eval_field(field, 0.0, [[0.0, 0.0]])[0]
        # independent summation oracle
        expected = np.zeros(2)
        for zx, g in ((d, 1.0), (-d, -1.0)):
            r = np.array([0.0, 0.0]) - np.array([zx, 0.0])
            expected += g * np.array([-r[1], r[0]]) / (r @ r)
        assert v == pytest.approx(expected)
        assert expected == pytest.approx([0.0, -2.0 / d])


class TestBackgrounds:
    def test_rotation(self):
        bg = RotationBackground(1.0, (0.0, 0.0))
        assert bg(0.0, [[1.0, 0.0]])[0] == pytest.approx([0.0, 1.0])

    def test_linear_divergence_is_trace(self):
        bg = LinearBackground(np.array([[1.0, 0.0], [0.0, 0.0]]))
        assert bg.divergence(0.0, [[0.3, 0.4]])[0] == pytest.approx(1.0)

    def test_radial_divergence(self):
        bg = RadialBackground(-1.0, 2)
        x = np.array([[0.5, 0.0]])
        assert bg.divergence(0.0, x)[0] == pytest.approx(-2.0)

    def test_uniform(self):
        bg = UniformBackground([1.0, -2.0])
        assert bg(0.0, [[5.0, 5.0]])[0] == pytest.approx([1.0, -2.0])


class TestTrajectories:
    def test_circular_holder_constant_is_speed(self):
        tr = CircularTrajectory((0.0, 0.0), 0.5, 2.0)
        assert tr.holder_constant == pytest.approx(1.0)
        assert tr(0.0) == pytest.approx([0.5, 0.0])

    def test_piecewise_linear_clamps_and_interpolates(self):
        tr = PiecewiseLinearTrajectory([0.0, 1.0], [[0.0, 0.0], [1.0, 0.0]])
        assert tr(0.5) == pytest.approx([0.5, 0.0])
        assert tr(2.0) == pytest.approx([1.0, 0.0])
        assert tr.holder_constant == pytest.approx(1.0)

    def test_power_drift_holder_data(self):
        tr = PowerDriftTrajectory([0.0, 0.0], [1.0, 0.0], 0.5)
        assert tr.holder_exponent == 0.5
        assert tr.holder_constant == 1.0
        assert tr(0.25) == pytest.approx([0.5, 0.0])


class TestNormalComponent:
    def test_static_vortex_cancels(self):
        # the singular part is tangential to the distance level sets; with
        # the default distance-scaled FD step the truncation envelope is
        # h^2/(6 d^3) * |b|, well below 5e-4 at d >= 0.1
        field = static_vortex()
        ev = segment_evaluator_2d()
        gen = rng.stream(4, "cancel")
        pts = gen.normal(size=(500, 2))
        pts = pts[np.linalg.norm(pts, axis=1) >= 0.1][:300]
        vals, flagged = normal_component(field, ev, 0.4, pts)
        assert np.abs(vals).max() < 5e-4
        assert not flagged.any()

    def test_static_vortex_cancels_fixed_step(self):
        # at fixed step 1e-4 the truncation drops below 1e-5 everywhere
        field = static_vortex()
        ev = segment_evaluator_2d()
        gen = rng.stream(4, "cancel-fixed")
        pts = gen.normal(size=(500, 2))
        pts = pts[np.linalg.norm(pts, axis=1) >= 0.1][:300]
        vals, _ = normal_component(field, ev, 0.4, pts, grad_step=1e-4)
        assert np.abs(vals).max() < 1e-5

    def test_radial_field_aligns(self):
        field = FieldSpec(RadialBackground(1.0, 2), ())
        ev = segment_evaluator_2d()
        vals, _ = normal_component(field, ev, 0.4, [[0.6, 0.0], [0.0, -0.8]])
        assert vals == pytest.approx([1.0, 1.0], abs=1e-5)

    def test_bounded_by_speed(self):
        field = FieldSpec(RotationBackground(2.0, (0.3, 0.0)), ())
        ev = segment_evaluator_2d()
        gen = rng.stream(5, "bound")
        pts = gen.normal(size=(400, 2))
        pts = pts[np.linalg.norm(pts, axis=1) >= 0.05]
        vals, _ = normal_component(field, ev, 0.2, pts)
        speed = np.sqrt((field(0.2, pts) ** 2).sum(axis=1))
        assert np.all(np.abs(vals) <= speed * (1 + 1e-3) + 1e-9)

    def test_floor_is_enforced(self):
        field = static_vortex()
        ev = segment_evaluator_2d()
        with pytest.raises(ValueError, match="floor"):
            normal_component(field, ev, 0.4, [[1e-12, 0.0]])


class TestMixedNorm:
    def test_constant_closed_form(self):
        domain = Box([0.0, 0.0], [2.0, 1.0])
        t_grid = np.linspace(0.0, 3.0, 13)
        c = 1.7
        est = mixed_norm_estimate(lambda t, x: np.full(x.shape[0], c), 2.0, 3.0,
                                  domain, t_grid)
        expected = c * domain.volume ** (1 / 3) * 3.0 ** (1 / 2)
        assert est.value == pytest.approx(expected, rel=1e-6)

    def test_inf_exponents_take_maxima(self):
        domain = Box([0.0, 0.0], [1.0, 1.0])
        est = mixed_norm_estimate(lambda t, x: t * x[:, 0], math.inf, math.inf,
                                  domain, np.linspace(0, 1, 5),
                                  spatial_resolution=32)
        assert est.value == pytest.approx(1.0 * (1 - 1 / 64), rel=1e-2)

    def test_reciprocal_distance_member_side_stable(self):
        ev = segment_evaluator_2d()
        domain = Box([-1, -1], [1, 1])
        f = lambda t, x: 1.0 / np.maximum(ev.dist_section(t, x), 1e-12)
        est = mixed_norm_estimate(f, math.inf, 1.5, domain,
                                  np.linspace(0, 1, 5), excise=(ev, 1e-3),
                                  spatial_resolution=64)
        assert est.trend_ratio < 1.25

    def test_reciprocal_distance_nonmember_side_diverges(self):
        ev = segment_evaluator_2d()
        domain = Box([-1, -1], [1, 1])
        f = lambda t, x: 1.0 / np.maximum(ev.dist_section(t, x), 1e-12)
        est = mixed_norm_estimate(f, math.inf, 2.5, domain,
                                  np.linspace(0, 1, 5), excise=(ev, 1e-3),
                                  spatial_resolution=64)
        assert est.trend_ratio > 1.25
        # analytic radial oracle: modular grows like radius**(2-q)
        r1, r2 = est.excision_radii
        expected = (r1 ** -0.5 - 1.0) / (r2 ** -0.5 - 1.0)
        assert est.trend_ratio == pytest.approx(expected, rel=0.25)

    def test_nonfinite_inside_domain_raises(self):
        domain = Box([0.0, 0.0], [1.0, 1.0])
        bad = lambda t, x: np.where(x[:, 0] > 0.5, np.inf, 1.0)
        with pytest.raises(ValueError, match="non-finite"):
            mixed_norm_estimate(bad, 1.0, 1.0, domain, np.linspace(0, 1, 3))
