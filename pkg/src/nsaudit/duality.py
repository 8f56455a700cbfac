"""
Decomposition u = w + v and the duality representation of v.

w is the Stokes (heat) flow of u0 and v = u - w solves the perturbation system
with zero data.  Pairing v(t) with solenoidal test data phi0 gives

    (v(t), phi0) = int_0^t int u_i d_i phi_j u_j dx dtau,   phi = heat flow of phi0 at t - tau.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import (SpectralVectorField, gradient, inner, norm_grad_l2, norm_l2, norm_lp,
                   padded_values, vorticity)
from .report import FAIL, INCONCLUSIVE, PASS, AuditReport, write_csv
from .semigroup import heat_evolve, linear_tail_bound
from .solver import SolverConfig, Trajectory, integrate
from .toolkit import (TAIL_FRACTION_LIMIT, HlsParams, ImproperIntegral, SampledFunction, hls_operator,
                      proof_chain_audit, trapezoid)

DEFAULT_P_VALUES = (5.0, 6.0, 8.0, 12.0)
SWEEP_VARIATION_LIMIT = 0.20
# v below this fraction of max ||u||_inf at every sample is round-off, i.e. u = w
V_ROUNDOFF = 1e-12
PLATEAU_GROWTH_LIMIT = 1.25


def enstrophy_tail_bound(u_T: SpectralVectorField) -> float:
    """Certified bound for int_T^inf ||u(t)||_inf^2 dt for the 2D Navier-Stokes flow from u(T).

    ||u||_inf <= sum |u_hat| <= (sum_{k != 0} |k|^-4)^(1/2) ||grad omega||_2 / L, and the
    enstrophy identity gives int_T^inf ||grad omega||_2^2 <= ||omega(T)||_2^2 / 2.  The sum
    runs over the modes the solver keeps.
    """
    grid = u_T.grid
    k2 = grid.k_squared[grid.dealias_mask & (grid.k_squared > 0)]
    s4 = float(np.sum(k2**-2.0))
    enstrophy = grid.length**2 * float(np.sum(np.abs(vorticity(u_T)) ** 2))
    return s4 / grid.length**2 * 0.5 * enstrophy


@dataclass(eq=False)
class DecompositionRecord:
    """Norm series of u, w = e^{t Delta} u0 and v = u - w on the trajectory's sample grid.

    ``trajectory`` may be dropped (see :meth:`detach`) once only the norm series
    are needed; field access then raises.
    """

    times: np.ndarray
    u0_l2: float
    p_values: tuple
    norms: dict = field(repr=False)
    tails: dict = field(default_factory=dict)
    trajectory: Trajectory | None = field(default=None, repr=False)

    def detach(self) -> DecompositionRecord:
        return DecompositionRecord(self.times, self.u0_l2, self.p_values, self.norms, self.tails)

    def _traj(self) -> Trajectory:
        if self.trajectory is None:
            raise ValueError("record was detached from its trajectory")
        return self.trajectory

    @property
    def grid(self):
        return self._traj().grid

    @property
    def u0(self) -> SpectralVectorField:
        return self._traj().u0

    def u(self, i: int) -> SpectralVectorField:
        return self._traj().snapshots[i]

    def w(self, i: int) -> SpectralVectorField:
        return heat_evolve(self.u0, float(self.times[i]))

    def v(self, i: int) -> SpectralVectorField:
        return self.u(i) - self.w(i)

    def series(self, name: str) -> np.ndarray:
        return self.norms[name]

    def u_lp(self, p: float) -> np.ndarray:
        return self.norms[f"u_l{p:g}"]

    def index_of(self, t: float) -> int:
        hits = np.flatnonzero(np.abs(self.times - t) <= 1e-12 * max(1.0, abs(t)))
        if hits.size == 0:
            raise ValueError(f"t={t} is not a sample time")
        return int(hits[0])

    def sup_integral(self, name: str) -> ImproperIntegral:
        """int_0^inf ||name(t)||_inf^2 dt for name in u, w, v (trapezoid plus certified tail)."""
        sq = self.norms[f"{name}_sup"] ** 2
        return ImproperIntegral(trapezoid(self.times, sq), self.tails[name])


def decompose(traj: Trajectory, p_values=DEFAULT_P_VALUES) -> DecompositionRecord:
    """Split a trajectory into w and v and tabulate the norms used by the audits."""
    grid = traj.grid
    for s in traj.snapshots:
        if s.grid != grid:
            raise ValueError(f"grid mismatch: snapshot on {s.grid}, trajectory on {grid}")
    p_values = tuple(float(p) for p in p_values)
    names = ["u_sup", "w_sup", "v_sup", "u_l2", "w_l2", "v_l2", "u_grad_l2"] + [f"u_l{p:g}" for p in p_values]
    norms = {k: np.empty(len(traj.times)) for k in names}
    u0 = traj.u0
    for i, (t, u) in enumerate(zip(traj.times, traj.snapshots)):
        w = heat_evolve(u0, float(t))
        v = u - w
        uv, wv, vv = (padded_values(f.coeffs, 2) for f in (u, w, v))
        # sup norms on the same point set, so ||u|| <= ||w|| + ||v|| holds exactly
        norms["u_sup"][i] = float(np.max(np.sqrt(np.sum(uv**2, axis=0))))
        norms["w_sup"][i] = float(np.max(np.sqrt(np.sum(wv**2, axis=0))))
        norms["v_sup"][i] = float(np.max(np.sqrt(np.sum(vv**2, axis=0))))
        norms["u_l2"][i] = norm_l2(u)
        norms["w_l2"][i] = norm_l2(w)
        norms["v_l2"][i] = norm_l2(v)
        norms["u_grad_l2"][i] = norm_grad_l2(u)
        for p in p_values:
            norms[f"u_l{p:g}"][i] = norm_lp(u, p)
    v0 = norm_l2(traj.snapshots[0] - u0)
    if v0 > 1e-12 * max(1.0, norm_l2(u0)):
        raise ValueError(f"v(0) = {v0} is not zero")
    u_T = traj.snapshots[-1]
    tail_u = enstrophy_tail_bound(u_T)
    tail_w = linear_tail_bound(heat_evolve(u0, float(traj.times[-1])))
    if np.max(norms["v_sup"], initial=0.0) <= V_ROUNDOFF * np.max(norms["u_sup"], initial=0.0):
        # u solves the linear equation (e.g. Taylor-Green): v is identically zero
        for k in ("v_sup", "v_l2"):
            norms[k][:] = 0.0
        tail_v = 0.0
    else:
        # Minkowski in L^2(T, inf): ||v||_inf <= ||u||_inf + ||w||_inf
        tail_v = (math.sqrt(tail_u) + math.sqrt(tail_w)) ** 2
    return DecompositionRecord(np.array(traj.times), norm_l2(u0), p_values, norms,
                               {"u": tail_u, "w": tail_w, "v": tail_v}, traj)


def trilinear_density(u: SpectralVectorField, phi: SpectralVectorField) -> float:
    """int u_i (d_i phi_j) u_j dx, exact for band-limited fields (3x-degree product on a 2x grid)."""
    uv = padded_values(u.coeffs, 2)
    g = padded_values(gradient(phi), 2)  # g[j, i] = d_i phi_j
    dens = np.einsum("ixy,jixy,jxy->xy", uv, g, uv)
    return float(np.mean(dens) * u.grid.length**2)


def _check_test_field(phi0: SpectralVectorField) -> None:
    if not phi0.is_solenoidal():
        raise ValueError("phi0 must be solenoidal")
    if not phi0.is_mean_zero(1e-14 * max(1.0, float(np.max(np.abs(phi0.coeffs), initial=0.0)))):
        raise ValueError("phi0 must have zero mean")


def duality_sides(record: DecompositionRecord, phi0: SpectralVectorField, t: float) -> tuple[float, float]:
    """(LHS, RHS) of the duality representation at sample time ``t``."""
    if phi0.grid != record.grid:
        raise ValueError("phi0 and the record live on different grids")
    m = record.index_of(t)
    t = float(record.times[m])
    lhs = inner(record.v(m), phi0)
    taus = record.times[: m + 1]
    dens = np.array([trilinear_density(record.u(j), heat_evolve(phi0, t - float(tau)))
                     for j, tau in enumerate(taus)])
    return lhs, trapezoid(taus, dens) if m > 0 else 0.0


def duality_representation_check(record: DecompositionRecord, phi0: SpectralVectorField, t: float,
                                 tol: float = 1e-4) -> AuditReport:
    """Compare (v(t), phi0) with the time integral of the trilinear form (trapezoid in tau)."""
    _check_test_field(phi0)
    lhs, rhs = duality_sides(record, phi0, t)
    diff = abs(lhs - rhs)
    scale = max(abs(lhs), abs(rhs))
    rel = diff / scale if scale > 0 else 0.0
    return AuditReport(
        name="duality_representation",
        params={"t": float(t), "tolerance": tol, "dt": record._traj().dt,
                "n": record.grid.n, "samples": int(record.index_of(t)) + 1},
        lhs=lhs, rhs=rhs, status=PASS if diff <= tol * (1.0 + abs(lhs)) else FAIL,
        details={"abs_discrepancy": diff, "rel_discrepancy": rel},
    )


def duality_convergence(u0: SpectralVectorField, phi0: SpectralVectorField, t: float,
                        dts=(2e-3, 1e-3, 5e-4), min_order: float = 1.8, tol: float = 1e-4) -> AuditReport:
    """Self-convergence of the duality discrepancy under dt refinement (every step sampled).

    Passes when the observed order is at least ``min_order`` and the finest run
    satisfies ``|LHS - RHS| <= tol (1 + |LHS|)``.  When every discrepancy is below
    1e-13 (1 + |LHS|) the identity holds to round-off and the order is not measured.
    """
    _check_test_field(phi0)
    errs, sides = [], []
    for dt in dts:
        traj = integrate(u0, SolverConfig(dt=dt, T=t, n=u0.grid.n, L=u0.grid.length,
                                          dealias_fraction=u0.grid.dealias_fraction),
                         store_step_energy=False)
        rec = decompose(traj, p_values=())
        lhs, rhs = duality_sides(rec, phi0, t)
        sides.append((lhs, rhs))
        errs.append(abs(lhs - rhs))
    roundoff = all(e <= 1e-13 * (1.0 + abs(s[0])) for e, s in zip(errs, sides))
    orders = [] if roundoff else [math.log(errs[i] / errs[i + 1]) / math.log(dts[i] / dts[i + 1])
                                  for i in range(len(dts) - 1)]
    order = min(orders) if orders else math.inf
    rel = [e / max(abs(a), abs(b)) if max(abs(a), abs(b)) > 0 else 0.0 for e, (a, b) in zip(errs, sides)]
    ok = order >= min_order and errs[-1] <= tol * (1.0 + abs(sides[-1][0]))
    return AuditReport(
        name="duality_convergence", params={"t": t, "dts": list(dts), "min_order": min_order, "tolerance": tol},
        lhs=sides[-1][0], rhs=sides[-1][1], fitted_exponent=order, status=PASS if ok else FAIL,
        details={"discrepancies": errs, "rel_discrepancies": rel, "orders": orders,
                 "sides": [list(s) for s in sides]},
    )


def _check_p(p: float) -> None:
    if not p > 4:
        raise ValueError(f"p must lie in (4, inf), got {p}")


def proposition_ratio_series(record: DecompositionRecord, p: float):
    """(times, lhs, rhs, ratio): ||v(t)||_inf against int_0^t ||u||_p^2 (t - tau)^-(1/2 + 2/p).

    Samples where the right side vanishes are dropped.
    """
    _check_p(p)
    t = record.times
    alpha = HlsParams.for_lebesgue_exponent(p).alpha
    rhs = hls_operator(SampledFunction(t, record.u_lp(p) ** 2), alpha).values
    lhs = record.series("v_sup")
    keep = rhs > 0
    return t[keep], lhs[keep], rhs[keep], lhs[keep] / rhs[keep]


def write_ratio_csv(path, record: DecompositionRecord, p: float) -> None:
    t, lhs, rhs, ratio = proposition_ratio_series(record, p)
    write_csv(path, ["t", "lhs", "rhs", "ratio"], zip(t.tolist(), lhs.tolist(), rhs.tolist(), ratio.tolist()))


def _label(a: float) -> float:
    """Amplitude rounded for report parameters; measured norms carry round-off."""
    return float(f"{a:.12g}")


def _variation(values) -> float:
    """(max - min) / max of a nonnegative sequence (0 when all vanish)."""
    values = np.asarray(values, dtype=float)
    top = float(np.max(values, initial=0.0))
    return (top - float(np.min(values))) / top if top > 0 else 0.0


def proposition_bound_audit(records, p: float, max_variation: float = SWEEP_VARIATION_LIMIT) -> AuditReport:
    """Empirical constant of the pointwise-in-time bound for v, per record of an amplitude sweep.

    ``records`` is one record or a sequence (the sweep).  Passes when every max ratio
    is finite and, for a sweep, the max ratios vary by at most ``max_variation``
    relative to their largest value.
    """
    _check_p(p)
    if isinstance(records, DecompositionRecord):
        records = [records]
    if not records:
        raise ValueError("no records")
    maxima, amps = [], []
    for rec in records:
        _, _, _, ratio = proposition_ratio_series(rec, p)
        maxima.append(float(np.max(ratio, initial=0.0)))
        amps.append(_label(rec.u0_l2))
    finite = all(math.isfinite(m) for m in maxima)
    nonzero = [m for m in maxima if m > 0]
    variation = _variation(nonzero) if len(nonzero) > 1 else 0.0
    ok = finite and variation <= max_variation
    return AuditReport(
        name="proposition_bound", params={"p": p, "amplitudes": amps, "max_variation": max_variation},
        lhs=max(maxima), rhs=None, fitted_constant=max(maxima),
        status=PASS if ok else FAIL,
        details={"max_ratios": maxima, "variation": variation},
    )


def perturbation_sup_integral_audit(records, amplitudes=None, tail_tol: float = TAIL_FRACTION_LIMIT,
                                    growth_limit: float = PLATEAU_GROWTH_LIMIT) -> AuditReport:
    """I(lam) = int_0^inf ||v_lam||_inf^2 against lam^4 over an amplitude sweep of one u0.

    Passes when I(lam)/lam^4 never grows by more than ``growth_limit`` between
    consecutive amplitudes (a bounded sequence that is flat in the quadratic regime
    and decreasing once dissipation of the nonlinear transfer sets in).  Records with
    a tail fraction above ``tail_tol`` make the audit inconclusive.
    """
    records = list(records)
    if amplitudes is None:
        amplitudes = [r.u0_l2 for r in records]
    amplitudes = [float(a) for a in amplitudes]
    if len(amplitudes) != len(records) or not records:
        raise ValueError("need one record per amplitude")
    order = np.argsort(amplitudes)
    lams, ints, scaled, fracs = [], [], [], []
    for i in order:
        lam, rec = amplitudes[i], records[i]
        res = rec.sup_integral("v")
        lams.append(lam)
        ints.append(res.value)
        fracs.append(res.tail_fraction if res.value > 0 else 0.0)
        scaled.append(res.value / lam**4 if lam > 0 else 0.0)
    pos = [s for s, lam in zip(scaled, lams) if lam > 0]
    growth = [pos[i + 1] / pos[i] for i in range(len(pos) - 1) if pos[i] > 0]
    ok = all(math.isfinite(s) for s in scaled) and all(g <= growth_limit for g in growth)
    if not ok:
        status = FAIL
    elif max(fracs, default=0.0) > tail_tol:
        status = INCONCLUSIVE
    else:
        status = PASS
    return AuditReport(
        name="perturbation_sup_integral", params={"amplitudes": lams, "tail_tol": tail_tol},
        lhs=max(scaled, default=0.0), rhs=None, fitted_constant=max(scaled, default=0.0),
        fitted_exponent=None, status=status,
        tail_bound=max((rec.tails["v"] for rec in records), default=0.0),
        details={"integrals": ints, "scaled": scaled, "growth": growth, "tail_fractions": fracs},
    )


def proof_chain_sweep_audit(records, p: float, max_variation: float = SWEEP_VARIATION_LIMIT) -> AuditReport:
    """Run the proof-chain ledger on every record and require stable fitted constants."""
    _check_p(p)
    reports = [proof_chain_audit(rec, p) for rec in records]
    consts = [r.fitted_constant for r in reports]
    nonzero = [c for c in consts if c and c > 0]
    variation = _variation(nonzero) if len(nonzero) > 1 else 0.0
    statuses = [r.status for r in reports]
    if FAIL in statuses or variation > max_variation:
        status = FAIL
    elif INCONCLUSIVE in statuses:
        status = INCONCLUSIVE
    else:
        status = PASS
    return AuditReport(
        name="proof_chain_sweep", params={"p": p, "amplitudes": [_label(rec.u0_l2) for rec in records]},
        fitted_constant=max(consts, default=0.0), status=status,
        details={"constants": consts, "variation": variation, "ledgers": [r.to_dict() for r in reports]},
    )
