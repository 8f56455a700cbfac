import math

import numpy as np
import pytest

from nsaudit.duality import (DecompositionRecord, decompose, duality_convergence, duality_representation_check,
                             duality_sides, enstrophy_tail_bound, perturbation_sup_integral_audit,
                             proof_chain_sweep_audit, proposition_bound_audit, proposition_ratio_series,
                             trilinear_density, write_ratio_csv)
from nsaudit.grid import Grid, SpectralVectorField, inner, norm_sup, random_solenoidal
from nsaudit.report import FAIL, INCONCLUSIVE, PASS
from nsaudit.solver import SolverConfig, integrate, nonlinear_term, taylor_green
from nsaudit.toolkit import proof_chain_audit

N = 32


def run(u0, dt=0.01, T=1.0, stride=5, **kw):
    return integrate(u0, SolverConfig(dt=dt, T=T, n=u0.grid.n, sample_stride=stride, **kw))


@pytest.fixture(scope="module")
def sweep():
    u0 = random_solenoidal(Grid(N), 4, 21)
    return [decompose(run(u0 * a, T=3.0)) for a in (0.5, 1.0, 2.0)]


class TestDecompose:
    def test_taylor_green_has_no_perturbation(self):
        rec = decompose(run(taylor_green(Grid(N))))
        assert np.all(rec.series("v_sup") == 0) and rec.tails["v"] == 0.0
        np.testing.assert_allclose(rec.series("u_sup"), rec.series("w_sup"), rtol=1e-12)

    def test_zero_data(self):
        rec = decompose(run(SpectralVectorField.zeros(Grid(N)), T=0.1))
        assert all(np.all(v == 0) for v in rec.norms.values())
        assert rec.tails == {"u": 0.0, "w": 0.0, "v": 0.0}

    def test_linear_run_has_no_perturbation(self, field32):
        rec = decompose(run(field32, nonlinear=False))
        assert np.all(rec.series("v_sup") == 0)

    def test_triangle_inequality_and_v0(self, sweep):
        rec = sweep[-1]
        u, w, v = (rec.series(k) for k in ("u_sup", "w_sup", "v_sup"))
        assert np.all(u <= w + v + 1e-14)
        assert rec.series("v_sup")[0] <= 1e-14
        assert rec.series("v_sup")[1:].min() > 0

    def test_field_access_and_detach(self, sweep):
        rec = sweep[0]
        assert norm_sup(rec.v(3)) == pytest.approx(rec.series("v_sup")[3], rel=1e-10)
        d = rec.detach()
        np.testing.assert_array_equal(d.series("u_l6"), rec.u_lp(6))
        with pytest.raises(ValueError):
            d.u(0)

    def test_index_of(self, sweep):
        assert sweep[0].index_of(0.5) == 10
        with pytest.raises(ValueError):
            sweep[0].index_of(0.51)

    def test_enstrophy_tail_dominates_sampled_tail(self):
        # the certified tail from t = 1 must exceed the measured integral over [1, 3]
        u0 = random_solenoidal(Grid(N), 4, 21, 2.0)
        rec = decompose(run(u0, T=3.0, stride=1))
        t, s = rec.times, rec.series("u_sup") ** 2
        m = rec.index_of(1.0)
        sampled = float(np.sum(np.diff(t[m:]) * (s[m:-1] + s[m + 1:]) / 2))
        assert enstrophy_tail_bound(rec.u(m)) >= sampled

    def test_sup_integral(self, sweep):
        res = sweep[1].sup_integral("w")
        assert res.value > 0 and res.tail_fraction < 0.01


class TestDuality:
    def test_trilinear_matches_nonlinear_term(self, field32):
        # int u_i d_i phi_j u_j = -(u.grad u, phi) = -(P(omega u_perp), phi) for solenoidal phi
        phi = random_solenoidal(Grid(N), 3, 2)
        assert trilinear_density(field32, phi) == pytest.approx(-inner(nonlinear_term(field32), phi), rel=1e-12)

    def test_representation_second_order(self):
        u0 = random_solenoidal(Grid(N), 3, 1)
        phi0 = random_solenoidal(Grid(N), 3, 2)
        rep = duality_convergence(u0, phi0, 0.2, dts=(0.01, 0.005, 0.0025))
        assert rep.status == PASS
        assert min(rep.details["orders"]) >= 1.8

    def test_representation_check_on_record(self):
        u0 = random_solenoidal(Grid(N), 3, 1)
        rec = decompose(run(u0, dt=0.0025, T=0.2, stride=1))
        rep = duality_representation_check(rec, random_solenoidal(Grid(N), 3, 2), 0.2)
        assert rep.status == PASS and rep.details["rel_discrepancy"] <= 1e-3

    def test_taylor_green_both_sides_vanish(self):
        rec = decompose(run(taylor_green(Grid(N)), stride=1, T=0.2))
        lhs, rhs = duality_sides(rec, random_solenoidal(Grid(N), 3, 2), 0.2)
        assert abs(lhs) <= 1e-12 and abs(rhs) <= 1e-12

    def test_rejects_bad_test_field(self, sweep, grid16):
        rec = sweep[0]
        vals = np.zeros((2, N, N), dtype=complex)
        vals[0, 1, 0] = vals[0, -1, 0] = 1.0  # compressive mode
        with pytest.raises(ValueError):
            duality_representation_check(rec, SpectralVectorField(Grid(N), vals), 0.5)
        with pytest.raises(ValueError):
            duality_sides(rec, random_solenoidal(grid16, 3, 2), 0.5)


class TestProposition:
    @pytest.mark.parametrize("p", [4.0, 3.0])
    def test_rejects_small_p(self, sweep, p):
        with pytest.raises(ValueError):
            proposition_ratio_series(sweep[0], p)

    @pytest.mark.parametrize("p", [5.0, 6.0, 8.0, 12.0])
    def test_bounded_ratio(self, sweep, p):
        rep = proposition_bound_audit(sweep, p)
        assert rep.status == PASS
        assert all(math.isfinite(m) and m > 0 for m in rep.details["max_ratios"])

    def test_variation_flagged(self, sweep):
        rep = proposition_bound_audit(sweep, 6.0, max_variation=1e-9)
        assert rep.status == FAIL

    def test_ratio_csv(self, sweep, tmp_path):
        path = tmp_path / "r.csv"
        write_ratio_csv(path, sweep[0], 6.0)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,lhs,rhs,ratio"
        assert len(lines) == len(proposition_ratio_series(sweep[0], 6.0)[0]) + 1


class TestPerturbation:
    def test_plateau(self, sweep):
        rep = perturbation_sup_integral_audit(sweep, amplitudes=[0.5, 1.0, 2.0])
        assert rep.status in (PASS, INCONCLUSIVE)
        assert all(g <= 1.25 for g in rep.details["growth"])
        ints = rep.details["integrals"]
        assert ints[0] < ints[1] < ints[2]

    def test_growth_flagged(self, sweep):
        # claiming the runs used amplitudes that shrink too fast makes I / lam^4 grow
        rep = perturbation_sup_integral_audit(sweep, amplitudes=[0.5, 0.55, 0.6])
        assert rep.status == FAIL

    def test_tail_inconclusive(self, sweep):
        short = [DecompositionRecord(r.times, r.u0_l2, r.p_values, r.norms, {**r.tails, "v": 1.0})
                 for r in sweep]
        assert perturbation_sup_integral_audit(short).status == INCONCLUSIVE

    def test_length_mismatch(self, sweep):
        with pytest.raises(ValueError):
            perturbation_sup_integral_audit(sweep, amplitudes=[1.0])


class TestProofChain:
    def test_links(self, sweep):
        rep = proof_chain_audit(sweep[1], 6.0)
        names = [lk["name"] for lk in rep.details["links"]]
        assert names == ["hls_step", "gn_substitution", "energy_monotonicity", "energy_identity",
                         "elementary_combination"]
        assert all(lk["holds"] for lk in rep.details["links"])
        assert rep.status == PASS

    def test_sweep(self, sweep):
        rep = proof_chain_sweep_audit(sweep, 8.0)
        assert rep.status == PASS and len(rep.details["constants"]) == 3
