"""Semi-Lagrangian solver, weak-form residuals and energy bounds."""

import math

import numpy as np
import pytest

from fractalflow.fields import (
    FieldSpec,
    FixedTrajectory,
    LinearBackground,
    RotationBackground,
    UniformBackground,
    ZeroBackground,
    make_point_vortex_field,
)
from fractalflow.flow import distance_from_static_points
from fractalflow.sets import Box
from fractalflow.transport import (
    SpaceTimeBump,
    gronwall_check,
    renormalization_residual,
    solve_transport,
)

DOMAIN = Box([-1.0, -1.0], [1.0, 1.0])


def gaussian(center, sigma):
    c = np.asarray(center, dtype=float)
    return lambda pts: np.exp(-((pts - c) ** 2).sum(axis=1) / (2 * sigma ** 2))


class TestSolver:
    def test_zero_field_exact(self):
        u0 = gaussian([0.2, 0.0], 0.3)
        u = solve_transport(FieldSpec(ZeroBackground(2), ()), u0, DOMAIN,
                            32, 1.0, 16)
        assert np.array_equal(u.values[-1], u.values[0])

    def test_uniform_translation(self):
        u0 = gaussian([-0.3, 0.0], 0.15)
        field = FieldSpec(UniformBackground([0.5, 0.0]), ())
        u = solve_transport(field, u0, DOMAIN, 64, 1.0, 32,
                            interpolation="cubic")
        nodes = u.nodes()
        exact = u0(nodes - np.array([0.5, 0.0])).reshape(u.values[-1].shape)
        err = np.sqrt(((u.values[-1] - exact) ** 2).mean())
        assert err < 5e-3

    def test_translation_equivariance_periodic(self):
        # shifting periodic data by a whole number of cells commutes with
        # solving, to machine-level interpolation error
        res, steps = 32, 8
        field = FieldSpec(UniformBackground([0.25, 0.0]), ())
        shift_cells = 4
        shift = shift_cells * 2.0 / res

        u0 = lambda pts: np.sin(np.pi * pts[:, 0]) * np.cos(np.pi * pts[:, 1])
        u0_shifted = lambda pts: u0(pts - np.array([shift, 0.0]))
        a = solve_transport(field, u0, DOMAIN, res, 1.0, steps,
                            boundary="periodic")
        b = solve_transport(field, u0_shifted, DOMAIN, res, 1.0, steps,
                            boundary="periodic")
        rolled = np.roll(a.values[-1][:-1, :], shift_cells, axis=0)
        assert np.allclose(b.values[-1][:-1, :], rolled, atol=1e-12)

    def test_rotation_returns_in_one_period(self):
        u0 = gaussian([0.45, 0.0], 0.16)
        field = FieldSpec(RotationBackground(1.0, (0.0, 0.0)), ())
        T = 2 * math.pi
        u = solve_transport(field, u0, DOMAIN, 64, T, 128,
                            interpolation="cubic")
        err = np.sqrt(((u.values[-1] - u.values[0]) ** 2).mean())
        base = np.sqrt((u.values[0] ** 2).mean())
        assert err / base < 0.02

    def test_maximum_principle_bilinear(self):
        u0 = gaussian([0.3, 0.2], 0.2)
        field = FieldSpec(RotationBackground(1.0, (0.0, 0.0)), ())
        u = solve_transport(field, u0, DOMAIN, 48, 2.0, 64)
        assert u.values.min() >= u.values[0].min() - 1e-14
        assert u.values.max() <= u.values[0].max() + 1e-14

    def test_cfl_guard(self):
        field = FieldSpec(UniformBackground([50.0, 0.0]), ())
        with pytest.raises(ValueError, match="exceeds"):
            solve_transport(field, gaussian([0, 0], 0.2), DOMAIN, 16, 1.0, 2)

    def test_vortex_contaminates_core_nodes_only(self):
        field = make_point_vortex_field(FixedTrajectory([0.0, 0.0]), 0.05)
        dist = distance_from_static_points(np.array([[0.0, 0.0]]))
        u = solve_transport(field, gaussian([0.4, 0.0], 0.2), DOMAIN, 32,
                            0.5, 32, distance=dist, delta_min=0.02)
        contaminated = u.contaminated[-1]
        assert contaminated.any()
        nodes = u.nodes()
        rad = np.linalg.norm(nodes, axis=1).reshape(contaminated.shape)
        assert rad[contaminated].max() < 0.3  # only near the vortex core


class TestBump:
    def bump(self):
        return SpaceTimeBump(0.5, np.array([0.1, -0.1]), 0.4,
                            np.array([0.5, 0.4]))

    def test_analytic_derivatives_match_fd(self):
        phi = self.bump()
        rng = np.random.default_rng(3)
        pts = rng.uniform(-0.25, 0.25, size=(200, 2)) + np.array([0.1, -0.1])
        ts = rng.uniform(0.2, 0.8, size=200)
        h = 1e-6
        for t, x in zip(ts[:40], pts[:40]):
            x = x[None, :]
            fd_t = (phi.value(t + h, x) - phi.value(t - h, x)) / (2 * h)
            assert phi.dt(t, x)[0] == pytest.approx(fd_t[0], abs=1e-6)
            for j in range(2):
                e = np.zeros(2)
                e[j] = h
                fd_x = (phi.value(t, x + e) - phi.value(t, x - e)) / (2 * h)
                assert phi.grad(t, x)[0, j] == pytest.approx(fd_x[0], abs=1e-6)

    def test_support_validation(self):
        phi = SpaceTimeBump(0.5, np.array([0.0, 0.0]), 0.7, np.array([2.5, 0.5]))
        with pytest.raises(ValueError, match="inside the domain"):
            phi.validate_support(DOMAIN, 1.0)
        phi2 = SpaceTimeBump(0.9, np.array([0.0, 0.0]), 0.3, np.array([0.5, 0.5]))
        with pytest.raises(ValueError, match="horizon"):
            phi2.validate_support(DOMAIN, 1.0)

    def test_compact_support(self):
        phi = self.bump()
        assert phi.value(0.5, [[5.0, 5.0]])[0] == 0.0
        assert phi.value(2.0, [[0.1, -0.1]])[0] == 0.0


class TestRenormalizationResidual:
    def test_constant_solution_divergence_free(self):
        field = FieldSpec(RotationBackground(1.0, (0.0, 0.0)), ())
        u = solve_transport(field, lambda p: np.full(p.shape[0], 0.7), DOMAIN,
                            48, 1.0, 48)
        phi = SpaceTimeBump(0.5, np.array([0.0, 0.0]), 0.35, np.array([0.6, 0.6]))
        res = renormalization_residual(u, field, lambda z: z ** 2, phi)
        assert res < 5e-4

    def test_identity_beta_translation_refines(self):
        field = FieldSpec(UniformBackground([0.4, 0.0]), ())
        phi = SpaceTimeBump(0.5, np.array([0.0, 0.0]), 0.4, np.array([0.5, 0.5]))
        u0 = gaussian([-0.25, 0.0], 0.18)
        residuals = []
        for res, steps in ((32, 16), (64, 32), (128, 64)):
            u = solve_transport(field, u0, DOMAIN, res, 1.0, steps,
                                interpolation="cubic")
            residuals.append(renormalization_residual(u, field, lambda z: z,
                                                      phi, u0=u0))
        assert residuals[2] < residuals[1] < residuals[0]
        order = math.log2(residuals[0] / residuals[2]) / 2.0
        assert order >= 0.8

    def test_beta_panel_rotation_refines(self):
        # residual decreases under refinement for each renormalizing map
        field = FieldSpec(RotationBackground(1.0, (0.0, 0.0)), ())
        phi = SpaceTimeBump(0.5, np.array([0.0, 0.0]), 0.4, np.array([0.6, 0.6]))
        u0 = gaussian([0.35, 0.0], 0.2)
        betas = {"identity": lambda z: z, "square": lambda z: z ** 2,
                 "cos": np.cos}
        residuals = {name: [] for name in betas}
        for res, steps in ((32, 16), (64, 32), (128, 64)):
            u = solve_transport(field, u0, DOMAIN, res, 1.0, steps,
                                interpolation="cubic")
            for name, beta in betas.items():
                residuals[name].append(
                    renormalization_residual(u, field, beta, phi, u0=u0))
        for name, seq in residuals.items():
            assert seq[2] < seq[1] < seq[0], name
            assert math.log2(seq[0] / seq[2]) / 2.0 >= 0.8, name

    def test_initial_term_active_when_bump_reaches_zero(self):
        field = FieldSpec(ZeroBackground(2), ())
        u0 = gaussian([0.0, 0.0], 0.25)
        u = solve_transport(field, u0, DOMAIN, 32, 1.0, 16)
        phi = SpaceTimeBump(0.0, np.array([0.0, 0.0]), 0.5, np.array([0.6, 0.6]))
        # stationary solution: interior terms cancel against the initial term
        res = renormalization_residual(u, field, lambda z: z, phi, u0=u0)
        assert res < 1e-3

    def test_contaminated_support_raises(self):
        field = make_point_vortex_field(FixedTrajectory([0.0, 0.0]), 0.05)
        dist = distance_from_static_points(np.array([[0.0, 0.0]]))
        u = solve_transport(field, gaussian([0.4, 0.0], 0.2), DOMAIN, 32,
                            0.5, 32, distance=dist, delta_min=0.05)
        phi = SpaceTimeBump(0.25, np.array([0.0, 0.0]), 0.2, np.array([0.3, 0.3]))
        with pytest.raises(ValueError, match="contaminated"):
            renormalization_residual(u, field, lambda z: z, phi)


class TestGronwall:
    def test_zero_field_energy_exact(self):
        field = FieldSpec(ZeroBackground(2), ())
        u = solve_transport(field, gaussian([0.0, 0.0], 0.25), DOMAIN, 32,
                            1.0, 8)
        gw = gronwall_check(u, field)
        assert gw.conservation_ratio == pytest.approx(1.0, abs=1e-14)
        assert gw.max_violation_margin <= 1e-12

    def test_rotation_conserves_energy_over_period(self):
        field = FieldSpec(RotationBackground(1.0, (0.0, 0.0)), ())
        u = solve_transport(field, gaussian([0.4, 0.0], 0.16), DOMAIN, 96,
                            2 * math.pi, 128, interpolation="cubic")
        gw = gronwall_check(u, field)
        assert abs(gw.conservation_ratio - 1.0) < 0.01
        assert gw.max_violation_margin <= 0.01

    def test_expanding_field_growth_bounded(self):
        # div b = 1: energy grows at most like e^t
        field = FieldSpec(LinearBackground(np.array([[1.0, 0.0], [0.0, 0.0]])), ())
        u0 = gaussian([0.0, 0.0], 0.12)
        u = solve_transport(field, u0, DOMAIN, 96, 0.5, 64,
                            interpolation="cubic")
        gw = gronwall_check(u, field)
        growth = gw.energy[-1] / gw.energy[0]
        assert growth <= math.exp(0.5) * 1.01
        assert gw.max_violation_margin <= 0.01
