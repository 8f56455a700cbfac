"""
Exact Stokes semigroup on the torus and audits of its decay laws.

For mean-zero solenoidal data the Stokes flow is the heat flow, i.e. the
Fourier multiplier exp(-|k|^2 t) (unit viscosity); the pressure gradient
vanishes identically.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .grid import (Grid, SpectralVectorField, gaussian_bump, norm_grad_l2, norm_grad_lp,
                   norm_l2, norm_lp, norm_sup)
from .report import FAIL, INCONCLUSIVE, PASS, AuditReport
from .toolkit import (TAIL_FRACTION_LIMIT, DecayFit, ImproperIntegral, SampledFunction,
                      log_simpson, powerlaw_fit)


@dataclass(frozen=True)
class NormSeries:
    """Sampled time series of one norm of one field."""

    times: np.ndarray
    values: np.ndarray
    norm_kind: str

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(v < 0):
            raise ValueError("norm values must be nonnegative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def as_sampled(self) -> SampledFunction:
        return SampledFunction(self.times, self.values)


def write_norm_series_csv(path, series) -> None:
    """CSV with header ``t,norm_kind,value``, one row per sample of each series."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "norm_kind", "value"])
        for s in series:
            for t, v in zip(s.times, s.values):
                w.writerow([repr(float(t)), s.norm_kind, repr(float(v))])


def read_norm_series_csv(path) -> list[NormSeries]:
    rows: dict[str, list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["t", "norm_kind", "value"]:
            raise ValueError(f"{path}: unexpected header {header}")
        for t, kind, v in reader:
            rows.setdefault(kind, []).append((float(t), float(v)))
    return [NormSeries(np.array([a for a, _ in r]), np.array([b for _, b in r]), k) for k, r in rows.items()]


def heat_multiplier(grid: Grid, t: float) -> np.ndarray:
    return np.exp(-grid.k_squared * t)


def heat_evolve(f: SpectralVectorField, t: float) -> SpectralVectorField:
    """Stokes flow of solenoidal mean-zero data for time ``t``."""
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if t == 0:
        return f
    return SpectralVectorField(f.grid, f.coeffs * heat_multiplier(f.grid, t))


def power_law_window_limits(grid: Grid) -> tuple[float, float]:
    """(1/k_max^2, 1/k_min^2): the only range where torus decay can look algebraic."""
    return 1.0 / grid.dealias_cutoff**2, 1.0 / grid.k_unit**2


def _check_window(grid: Grid, window) -> None:
    lo, hi = power_law_window_limits(grid)
    if not (lo <= window[0] < window[1] <= hi):
        raise ValueError(f"window {tuple(window)} outside the power-law regime ({lo:.4g}, {hi:.4g})")


def decay_audit(u0: SpectralVectorField, r: float, p: float, window, samples: int = 24,
                tol: float = 0.05) -> AuditReport:
    """Fit the decay of ||w(t)||_p against the bound c t^-(1/r - 1/p) ||u0||_r.

    Passes when the fitted exponent is within ``tol`` of -(1/r - 1/p) and the
    pointwise ratio ||w(t)||_p t^(1/r-1/p) / ||u0||_r on a 3x denser sampling
    of the window stays below the constant fitted on the coarse samples (1%
    slack for the interpolation between them).
    """
    if not (1 < r <= p):
        raise ValueError(f"need 1 < r <= p, got r={r}, p={p}")
    _check_window(u0.grid, window)
    beta = 1.0 / r - (0.0 if math.isinf(p) else 1.0 / p)
    ur = norm_lp(u0, r)
    t = np.geomspace(window[0], window[1], samples)
    vals = np.array([norm_lp(heat_evolve(u0, s), p) for s in t])
    fit = powerlaw_fit(t, vals, window)
    ratio = vals * t**beta / ur
    c_bound = float(np.max(ratio))
    t_fine = np.geomspace(window[0], window[1], 3 * samples)
    fine = np.array([norm_lp(heat_evolve(u0, s), p) for s in t_fine]) * t_fine**beta / ur
    uniform = bool(np.max(fine) <= 1.01 * c_bound)
    exponent_ok = abs(fit.exponent + beta) <= tol
    return AuditReport(
        name="stokes_decay",
        params={"r": r, "p": p, "samples": samples, "tolerance": tol},
        lhs=float(np.max(fine)), rhs=c_bound,
        fitted_constant=c_bound, fitted_exponent=fit.exponent, window=tuple(window),
        status=PASS if exponent_ok and uniform else FAIL,
        details={"expected_exponent": -beta, "fit_prefactor": fit.constant / ur,
                 "fit_residual": fit.residual, "u0_r_norm": ur,
                 "times": t.tolist(), "values": vals.tolist()},
    )


def l1_decay_audit(grid: Grid, mass: float, width: float, q: float, window, samples: int = 24,
                   tol: float = 0.07) -> AuditReport:
    """Decay of ||phi(t)||_q and ||grad phi(t)||_q for a narrow projected Gaussian bump.

    Expected exponents for t <= 1 are -mu and -(1/2 + mu) with mu = 1 - 1/q.
    """
    if not q > 1:
        raise ValueError(f"q must exceed 1, got {q}")
    phi0 = gaussian_bump(grid, mass, width)
    if not (width**2 <= window[0] < window[1] <= 1.0):
        raise ValueError(f"window {tuple(window)} must lie inside (width^2, 1]")
    mu = 1.0 - (0.0 if math.isinf(q) else 1.0 / q)
    mu1 = 0.5 + mu
    t = np.geomspace(window[0], window[1], samples)
    phis = [heat_evolve(phi0, s) for s in t]
    vals = np.array([norm_lp(f, q) for f in phis])
    grads = np.array([norm_grad_lp(f, q) for f in phis])
    fit = powerlaw_fit(t, vals, window)
    fit_grad = powerlaw_fit(t, grads, window)
    l1 = norm_lp(phi0, 1.0)
    ok = abs(fit.exponent + mu) <= tol and abs(fit_grad.exponent + mu1) <= tol
    return AuditReport(
        name="l1_decay",
        params={"q": q, "mass": mass, "width": width, "n": grid.n, "tolerance": tol},
        lhs=fit.exponent, rhs=-mu,
        fitted_constant=float(np.max(vals * t**mu)) / l1, fitted_exponent=fit.exponent,
        window=tuple(window), status=PASS if ok else FAIL,
        details={"mu": mu, "mu1": mu1, "grad_exponent": fit_grad.exponent,
                 "grad_constant": float(np.max(grads * t**mu1)) / l1,
                 "phi0_l1": l1, "residual": fit.residual, "grad_residual": fit_grad.residual,
                 "times": t.tolist(), "values": vals.tolist(), "grad_values": grads.tolist()},
    )


def l1_decay_fits(grid: Grid, mass: float, width: float, q: float, window,
                  samples: int = 24) -> tuple[DecayFit, DecayFit]:
    """The (phi, grad phi) DecayFit pair underlying :func:`l1_decay_audit`."""
    rep = l1_decay_audit(grid, mass, width, q, window, samples)
    t = np.array(rep.details["times"])
    return (powerlaw_fit(t, rep.details["values"], window),
            powerlaw_fit(t, rep.details["grad_values"], window))


def wiener_norm(f: SpectralVectorField) -> float:
    """sum_k |f_hat(k)|, an upper bound for ||f||_inf."""
    return float(np.sum(np.sqrt(np.sum(np.abs(f.coeffs) ** 2, axis=0))))


def linear_tail_bound(w_T: SpectralVectorField) -> float:
    """Certified bound for int_T^inf ||w(t)||_inf^2 dt given w(T), for the Stokes flow.

    ||w(T+s)||_inf <= sum_k |w_hat(k,T)| exp(-|k|^2 s) <= exp(-k_min^2 s) sum_k |w_hat(k,T)|.
    """
    return wiener_norm(w_T) ** 2 / (2.0 * w_T.grid.k_unit**2)


def linear_time_grid(grid: Grid, horizon: float, per_decade: int = 200) -> np.ndarray:
    """t = 0 followed by an odd-length geometric grid from 1e-3/k_max^2 to ``horizon``."""
    t0 = 1e-3 / grid.dealias_cutoff**2
    if horizon <= t0:
        raise ValueError("horizon too short")
    m = int(math.ceil(per_decade * math.log10(horizon / t0))) + 1
    m += 1 - m % 2
    return np.concatenate([[0.0], np.geomspace(t0, horizon, m)])


def linear_sup_integral(u0: SpectralVectorField, horizon: float) -> ImproperIntegral:
    """int_0^inf ||w(t)||_inf^2 dt for the Stokes flow of ``u0`` (value, certified tail)."""
    t = linear_time_grid(u0.grid, horizon)
    sq = np.array([norm_sup(heat_evolve(u0, s)) ** 2 for s in t])
    truncated = log_simpson(t, sq)
    return ImproperIntegral(truncated, linear_tail_bound(heat_evolve(u0, horizon)))


def linear_sup_integral_audit(u0: SpectralVectorField, horizon: float, tail_tol: float = TAIL_FRACTION_LIMIT,
                              amplitudes=(0.25, 0.5, 1.0, 2.0, 4.0), tol: float = 1e-10) -> AuditReport:
    """Ratio int_0^inf ||w||_inf^2 / ||u0||_2^2, checked for invariance under u0 -> lam u0."""
    e0 = norm_l2(u0) ** 2
    if e0 == 0.0:
        return AuditReport(name="linear_sup_integral", params={"horizon": horizon},
                           lhs=0.0, rhs=0.0, fitted_constant=0.0, tail_bound=0.0)
    ratios, tails = [], []
    for lam in amplitudes:
        res = linear_sup_integral(u0 * lam, horizon)
        ratios.append(res.value / (lam**2 * e0))
        tails.append(res.tail_fraction)
    base = linear_sup_integral(u0, horizon)
    spread = max(abs(x / ratios[0] - 1.0) for x in ratios)
    if max(tails) > tail_tol:
        status = INCONCLUSIVE
    else:
        status = PASS if spread <= tol else FAIL
    return AuditReport(
        name="linear_sup_integral",
        params={"horizon": horizon, "amplitudes": list(amplitudes)},
        lhs=base.value, rhs=e0, fitted_constant=base.value / e0,
        status=status, tail_bound=base.tail,
        details={"ratios": ratios, "amplitude_spread": spread, "tail_fractions": tails,
                 "truncated": base.truncated},
    )


def linear_energy_identity_residual(u0: SpectralVectorField, t: float) -> float:
    """|1/2 ||w(t)||^2 + int_0^t ||grad w||^2 - 1/2 ||u0||^2| / (1/2 ||u0||^2), by quadrature."""
    e0 = 0.5 * norm_l2(u0) ** 2
    if e0 == 0.0:
        return 0.0
    s = linear_time_grid(u0.grid, t, per_decade=400)
    diss = log_simpson(s, np.array([norm_grad_l2(heat_evolve(u0, x)) ** 2 for x in s]))
    return abs(0.5 * norm_l2(heat_evolve(u0, t)) ** 2 + diss - e0) / e0
