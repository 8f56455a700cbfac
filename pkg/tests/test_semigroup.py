import math

import numpy as np
import pytest

from nsaudit.grid import (Grid, PhysicalVectorField, SpectralVectorField, forward_transform, gaussian_bump,
                          leray_project, norm_l2, norm_lp, point_vortex)
from nsaudit.report import INCONCLUSIVE, PASS
from nsaudit.semigroup import (NormSeries, decay_audit, heat_evolve, l1_decay_audit, linear_energy_identity_residual,
                               linear_sup_integral, linear_sup_integral_audit, linear_tail_bound,
                               power_law_window_limits, read_norm_series_csv, wiener_norm, write_norm_series_csv)


def mode_field(grid, kx=1, ky=0, amp=1.0):
    """(-ky, kx) sin(kx x + ky y) scaled so the sup norm is ``amp``."""
    x, y = grid.coordinates
    s = np.sin(kx * x + ky * y)
    norm = math.hypot(kx, ky)
    vals = np.stack([-ky * s, kx * s]) * amp / norm
    return forward_transform(PhysicalVectorField(grid, vals))


class TestHeatEvolve:
    def test_single_mode_decay(self, grid16):
        u = mode_field(grid16, 2, 1)
        out = heat_evolve(u, 0.3)
        np.testing.assert_allclose(out.coeffs, u.coeffs * math.exp(-5 * 0.3), atol=1e-15)

    def test_semigroup_law(self, field32):
        a = heat_evolve(heat_evolve(field32, 0.1), 0.2)
        b = heat_evolve(field32, 0.3)
        np.testing.assert_allclose(a.coeffs, b.coeffs, atol=1e-15)

    def test_contraction_monotone(self, field32):
        norms = [norm_l2(heat_evolve(field32, t)) for t in (0, 0.01, 0.1, 1.0)]
        assert all(b <= a for a, b in zip(norms, norms[1:]))

    def test_commutes_with_projection(self, grid16, rng):
        f = forward_transform(PhysicalVectorField(grid16, rng.standard_normal((2, 16, 16))))
        a = heat_evolve(leray_project(f), 0.2)
        b = leray_project(heat_evolve(f, 0.2))
        np.testing.assert_allclose(a.coeffs, b.coeffs, atol=1e-15)

    def test_negative_time(self, field32):
        with pytest.raises(ValueError):
            heat_evolve(field32, -1.0)

    def test_zero_time_identity(self, field32):
        assert heat_evolve(field32, 0.0) is field32


class TestDecay:
    def test_point_vortex_exponents(self):
        # desk-scale check at n=128; the acceptance suite runs n=256
        u0 = point_vortex(Grid(128), 20)
        rep = decay_audit(u0, 2, 4, (1 / 100, 1 / 16), samples=16, tol=0.08)
        assert rep.status == PASS
        assert rep.details["expected_exponent"] == pytest.approx(-0.25)

    def test_window_outside_regime(self, field32):
        lo, hi = power_law_window_limits(field32.grid)
        with pytest.raises(ValueError):
            decay_audit(field32, 2, 4, (lo / 2, hi))
        with pytest.raises(ValueError):
            decay_audit(field32, 4, 2, (lo, hi))

    def test_contraction_when_p_equals_r(self):
        u0 = point_vortex(Grid(64), 12)
        rep = decay_audit(u0, 2, 2, (1 / 400, 1 / 16), samples=12)
        assert rep.fitted_constant <= 1.0

    def test_mass_scaling(self):
        g = Grid(64)
        w = 4 * g.spacing
        a = heat_evolve(gaussian_bump(g, 1.0, w), 0.05)
        b = heat_evolve(gaussian_bump(g, 2.0, w), 0.05)
        assert norm_lp(b, 4) == pytest.approx(2 * norm_lp(a, 4), rel=1e-12)

    def test_l1_decay_small(self):
        g = Grid(128)
        w = 4 * g.spacing
        rep = l1_decay_audit(g, 1.0, w, 2.0, (4 * w**2, 0.25), samples=12, tol=0.1)
        assert rep.details["mu"] == 0.5 and rep.details["mu1"] == 1.0
        assert rep.status == PASS

    def test_l1_window_check(self):
        g = Grid(64)
        with pytest.raises(ValueError):
            l1_decay_audit(g, 1.0, 4 * g.spacing, 2.0, (1e-6, 0.25))
        with pytest.raises(ValueError):
            l1_decay_audit(g, 1.0, 4 * g.spacing, 1.0, (0.1, 0.25))


class TestLinearSupIntegral:
    def test_single_mode_closed_form(self, grid16):
        # ||w(t)||_inf = a e^{-|k|^2 t}, so the integral is a^2 / (2 |k|^2)
        u = mode_field(grid16, 1, 1, amp=0.7)
        res = linear_sup_integral(u, 12.0)
        assert res.value == pytest.approx(0.49 / 4.0, rel=1e-8)
        assert res.tail_fraction < 1e-6

    def test_zero(self, grid16):
        rep = linear_sup_integral_audit(SpectralVectorField.zeros(grid16), 5.0)
        assert rep.lhs == 0.0 and rep.status == PASS

    def test_amplitude_invariance(self, field32):
        rep = linear_sup_integral_audit(field32, 6.0)
        assert rep.status == PASS and rep.details["amplitude_spread"] <= 1e-10

    def test_inconclusive_on_short_horizon(self, grid16):
        rep = linear_sup_integral_audit(mode_field(grid16), 0.05)
        assert rep.status == INCONCLUSIVE

    def test_tail_bound_dominates(self, grid16):
        u = mode_field(grid16, 1, 0)
        assert linear_tail_bound(u) >= wiener_norm(u) ** 2 / 2 - 1e-15


def test_linear_energy_identity(field32):
    assert linear_energy_identity_residual(field32, 1.0) <= 1e-8


def test_norm_series_csv(tmp_path):
    s = [NormSeries(np.array([0.0, 0.5]), np.array([1.0, 0.25]), "u_sup"),
         NormSeries(np.array([0.0, 0.5]), np.array([2.0, 0.5]), "u_l2")]
    path = tmp_path / "n.csv"
    write_norm_series_csv(path, s)
    assert path.read_text().splitlines()[0] == "t,norm_kind,value"
    back = read_norm_series_csv(path)
    assert [b.norm_kind for b in back] == ["u_sup", "u_l2"]
    np.testing.assert_array_equal(back[1].values, s[1].values)
    with pytest.raises(ValueError):
        NormSeries(np.array([0.0, 0.0]), np.array([1.0, 1.0]), "x")
