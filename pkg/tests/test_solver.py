import math

import numpy as np
import pytest

from nsaudit.grid import Grid, SpectralVectorField, inner, norm_sup, random_solenoidal
from nsaudit.report import PASS
from nsaudit.semigroup import heat_evolve
from nsaudit.solver import (CFLViolation, SolverConfig, SolverError, advection, boosted_taylor_green,
                            energy_identity_audit, energy_identity_residuals, integrate, load_trajectory,
                            nonlinear_term, recover_pressure, save_trajectory, step, taylor_green,
                            taylor_green_oracle_audit)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(dt=0.0, T=1.0)
        with pytest.raises(ValueError):
            SolverConfig(dt=0.3, T=1.0)
        with pytest.raises(ValueError):
            SolverConfig(dt=0.1, T=1.0, sample_stride=0)
        with pytest.raises(ValueError):
            SolverConfig(dt=0.1, T=1.0, dissipation_rule="simpson")
        assert SolverConfig(dt=0.1, T=1.0).n_steps == 10

    def test_grid_mismatch(self, field32):
        with pytest.raises(ValueError):
            integrate(field32, SolverConfig(dt=0.01, T=0.1, n=64))

    def test_rejects_nonzero_mean(self, grid16):
        c = np.zeros((2, 16, 16), dtype=complex)
        c[0, 0, 0] = 1.0
        with pytest.raises(ValueError):
            integrate(SpectralVectorField(grid16, c), SolverConfig(dt=0.01, T=0.1, n=16))


class TestNonlinearity:
    def test_vanishes_on_taylor_green(self):
        assert np.max(np.abs(nonlinear_term(taylor_green(Grid(32))).coeffs)) <= 1e-15

    def test_orthogonal_to_velocity(self, field32):
        # (P(omega u_perp), u) = 0 exactly for band-limited u
        u = field32 * 5.0
        assert abs(inner(nonlinear_term(u), u)) <= 1e-12 * norm_sup(u) ** 3

    def test_matches_projected_convective_form(self, field32):
        # u.grad u + grad p = P(omega u_perp) when p solves -Delta p = div(u.grad u)
        g = field32.grid
        kx, ky = g.derivative_wavenumbers
        p = recover_pressure(field32)
        conv = advection(field32) + np.stack([1j * kx * p, 1j * ky * p])
        np.testing.assert_allclose(conv, nonlinear_term(field32).coeffs, atol=1e-13)


class TestPressure:
    def test_taylor_green(self):
        # p = (cos 2x + cos 2y) / 4 for the unit-amplitude vortex
        g = Grid(32)
        p = recover_pressure(taylor_green(g))
        expected = np.zeros_like(p)
        for idx in [(2, 0), (-2, 0), (0, 2), (0, -2)]:
            expected[idx] = 1 / 8
        np.testing.assert_allclose(p, expected, atol=1e-15)

    def test_poisson_residual_random(self, field32):
        g = field32.grid
        kx, ky = g.derivative_wavenumbers
        u = field32 * 3.0
        a = advection(u)
        res = -g.k_squared * recover_pressure(u) + 1j * (kx * a[0] + ky * a[1])
        assert np.max(np.abs(res)) <= 1e-10

    def test_mean_zero(self, field32):
        assert recover_pressure(field32)[0, 0] == 0


class TestIntegrate:
    def test_zero_data(self, grid16):
        traj = integrate(SpectralVectorField.zeros(grid16), SolverConfig(dt=0.01, T=0.1, n=16))
        assert all(np.all(u.coeffs == 0) for u in traj.snapshots)
        assert np.all(energy_identity_residuals(traj) == 0)

    def test_linear_single_mode(self):
        g = Grid(32)
        u0 = random_solenoidal(g, 3, 5)
        traj = integrate(u0, SolverConfig(dt=0.01, T=0.5, n=32, sample_stride=10, nonlinear=False))
        for t, u in zip(traj.times, traj.snapshots):
            assert norm_sup(u - heat_evolve(u0, t)) <= 1e-10

    def test_taylor_green_decay(self):
        g = Grid(32)
        traj = integrate(taylor_green(g), SolverConfig(dt=0.01, T=0.5, n=32, sample_stride=25))
        assert norm_sup(traj.snapshots[-1] - taylor_green(g, 0.5)) <= 1e-12

    def test_sampling(self, field32):
        traj = integrate(field32, SolverConfig(dt=0.01, T=0.25, n=32, sample_stride=10))
        np.testing.assert_allclose(traj.times, [0.0, 0.1, 0.2, 0.25])
        assert traj.step_energy.size == 26

    def test_energy_identity_and_monotone(self):
        g = Grid(32)
        traj = integrate(random_solenoidal(g, 4, 8, 3.0), SolverConfig(dt=0.005, T=1.0, n=32, sample_stride=20))
        assert energy_identity_audit(traj, 1e-6).status == PASS
        assert np.all(np.diff(traj.step_energy) <= 0)
        assert all(u.is_solenoidal() for u in traj.snapshots)

    def test_corrected_rule_beats_trapezoid(self):
        g = Grid(32)
        u0 = random_solenoidal(g, 10, 4)
        res = {}
        for rule in ("corrected", "trapezoid"):
            cfg = SolverConfig(dt=0.01, T=0.5, n=32, sample_stride=50, dissipation_rule=rule)
            res[rule] = float(np.max(energy_identity_residuals(integrate(u0, cfg))))
        assert res["corrected"] <= 1e-6 < res["trapezoid"]

    def test_cfl_violation(self, field32):
        with pytest.raises(CFLViolation) as exc:
            integrate(field32 * 200.0, SolverConfig(dt=0.05, T=0.5, n=32))
        assert exc.value.step == 0
        assert isinstance(exc.value, SolverError)

    def test_single_step_helper(self, field32):
        traj = integrate(field32, SolverConfig(dt=0.01, T=0.01, n=32))
        np.testing.assert_allclose(step(field32, 0.01).coeffs, traj.snapshots[-1].coeffs, atol=1e-16)


def test_boosted_taylor_green_is_exact_shift():
    g = Grid(32)
    a = boosted_taylor_green(g, 0.0, (0.0, 0.0))
    np.testing.assert_allclose(a.coeffs, taylor_green(g).coeffs, atol=1e-15)
    b = boosted_taylor_green(g, 0.3, (1.0, 2.0))
    assert b.coeffs[0, 0, 0] == pytest.approx(1.0) and b.coeffs[1, 0, 0] == pytest.approx(2.0)


def test_oracle_audit_small():
    rep, traj = taylor_green_oracle_audit(n=32, dt=2e-3, T=0.2, sample_stride=50)
    assert rep.status == PASS
    assert rep.details["sup_error"] <= 1e-8
    assert math.log2(rep.details["halving_ratio"]) >= 3.5
    assert traj.times[-1] == pytest.approx(0.2)


def test_trajectory_round_trip(tmp_path, field32):
    traj = integrate(field32, SolverConfig(dt=0.01, T=0.1, n=32, sample_stride=5))
    save_trajectory(traj, tmp_path / "run")
    back = load_trajectory(tmp_path / "run")
    np.testing.assert_array_equal(back.times, traj.times)
    np.testing.assert_array_equal(back.dissipation, traj.dissipation)
    for a, b in zip(back.snapshots, traj.snapshots):
        np.testing.assert_array_equal(a.coeffs, b.coeffs)
    assert back.config == traj.config and back.integrator == "IFRK4"
