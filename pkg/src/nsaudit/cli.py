"""
Experiment orchestration and the ``audit`` command.

Configuration is an INI file whose sections are named after the modules they
parameterize; every key is optional (defaults below) but unknown sections or
keys are hard errors::

    [grid_spectral]
    n = 64
    length = 6.283185307179586
    dealias_fraction = 0.6666666666666666

    [nse_solver]
    dt = 0.002
    T = 6.0
    sample_stride = 5
    cfl_safety = 0.5
    dissipation_rule = corrected
    energy_tolerance = 1e-6

    [audit_cli]
    output = results
    data = random                 # random | taylor_green | zero
    seeds = 2
    base_seed = 2024
    k0 = 8
    amplitudes = 0.25, 0.5, 1, 2, 4, 8
    allow_large_amplitudes = false
    plateau_growth = 1.25

    [decomposition_duality]
    enabled = true
    p_values = 5, 6, 8, 12
    sweep_max_amplitude = 4
    variation_limit = 0.2
    duality = true
    duality_t = 0.5
    duality_dts = 0.002, 0.001, 0.0005
    duality_u_k0 = 4
    duality_u_seed = 1
    duality_k0 = 3
    duality_seed = 7
    duality_tolerance = 1e-4

    [stokes_semigroup]
    decay = false
    decay_pairs = 2:inf, 2:4, 2:6
    decay_n = 256
    decay_k_cut = 40
    decay_window = 0.0025, 0.0625
    decay_tolerance = 0.05
    l1_decay = false
    l1_q = 2, 4, inf
    l1_n = 512
    l1_width_cells = 4
    l1_window_end = 0.25
    l1_tolerance = 0.07

    [inequality_toolkit]
    hls = true
    hls_alpha = 0.25
    hls_r = 1.1428571428571428
    gn = true
    gn_p = 6

Exit codes: 0 pass, 1 fail, 2 inconclusive, 3 usage or configuration error.
The number of worker processes for ensemble members is read from
``AUDIT_WORKERS`` (default 1).
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .duality import (DEFAULT_P_VALUES, PLATEAU_GROWTH_LIMIT, SWEEP_VARIATION_LIMIT, DecompositionRecord,
                      decompose, duality_convergence, duality_sides, perturbation_sup_integral_audit, proof_chain_sweep_audit,
                      proposition_bound_audit, write_ratio_csv)
from .grid import Grid, SpectralVectorField, ensemble_seeds, norm_l2, point_vortex, random_solenoidal
from .report import (EXIT_CODES, FAIL, INCONCLUSIVE, PASS, AuditReport, combine_status, read_reports,
                     write_csv, write_reports)
from .semigroup import decay_audit, l1_decay_audit
from .solver import SolverConfig, energy_identity_audit, integrate, taylor_green, taylor_green_oracle_audit
from .toolkit import HlsParams, SampledFunction, TAIL_FRACTION_LIMIT, gn_audit, hls_bound_audit

USAGE_ERROR = 3
REPORTS_FILE = "reports.json"
THEOREM_FILE = "theorem.csv"
PLOT_FILES = ("plot_decay.csv", "plot_ratio_amplitude.csv", "plot_duality_refinement.csv")
MAX_DEFAULT_AMPLITUDE = 8.0


class ConfigError(ValueError):
    """Invalid configuration; ``line`` and ``key`` locate the offending entry when known."""

    def __init__(self, message, section=None, key=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if section is not None:
            where.append(f"[{section}]" + (f" {key}" if key else ""))
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.section, self.key, self.line = section, key, line


# ---------------------------------------------------------------------------
# configuration


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _pairs(text: str) -> tuple:
    out = []
    for item in text.replace(",", " ").split():
        r, p = item.split(":")
        out.append((float(r), float(p)))
    return tuple(out)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# (section, key) -> (attribute, parser)
_SCHEMA = {
    "grid_spectral": {"n": ("n", int), "length": ("length", float), "dealias_fraction": ("dealias_fraction", float)},
    "nse_solver": {"dt": ("dt", float), "T": ("T", float), "sample_stride": ("sample_stride", int),
                   "cfl_safety": ("cfl_safety", float), "dissipation_rule": ("dissipation_rule", str),
                   "energy_tolerance": ("energy_tolerance", float)},
    "audit_cli": {"output": ("output", str), "data": ("data", str), "seeds": ("seeds", int),
                  "base_seed": ("base_seed", int), "k0": ("k0", float), "amplitudes": ("amplitudes", _floats),
                  "allow_large_amplitudes": ("allow_large_amplitudes", _bool),
                  "plateau_growth": ("plateau_growth", float)},
    "decomposition_duality": {"enabled": ("decomposition", _bool), "p_values": ("p_values", _floats),
                              "sweep_max_amplitude": ("sweep_max_amplitude", float),
                              "variation_limit": ("variation_limit", float), "duality": ("duality", _bool),
                              "duality_t": ("duality_t", float), "duality_dts": ("duality_dts", _floats),
                              "duality_u_k0": ("duality_u_k0", float), "duality_u_seed": ("duality_u_seed", int),
                              "duality_k0": ("duality_k0", float), "duality_seed": ("duality_seed", int),
                              "duality_tolerance": ("duality_tolerance", float)},
    "stokes_semigroup": {"decay": ("decay", _bool), "decay_pairs": ("decay_pairs", _pairs),
                         "decay_n": ("decay_n", int), "decay_k_cut": ("decay_k_cut", float),
                         "decay_window": ("decay_window", _floats), "decay_tolerance": ("decay_tolerance", float),
                         "l1_decay": ("l1_decay", _bool), "l1_q": ("l1_q", _floats), "l1_n": ("l1_n", int),
                         "l1_width_cells": ("l1_width_cells", float), "l1_window_end": ("l1_window_end", float),
                         "l1_tolerance": ("l1_tolerance", float)},
    "inequality_toolkit": {"hls": ("hls", _bool), "hls_alpha": ("hls_alpha", float), "hls_r": ("hls_r", float),
                           "gn": ("gn", _bool), "gn_p": ("gn_p", float)},
}


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 64
    length: float = 2 * math.pi
    dealias_fraction: float = 2.0 / 3.0
    dt: float = 2e-3
    T: float = 6.0
    sample_stride: int = 5
    cfl_safety: float = 0.5
    dissipation_rule: str = "corrected"
    energy_tolerance: float = 1e-6
    output: str = "results"
    data: str = "random"
    seeds: int = 2
    base_seed: int = 2024
    k0: float = 8.0
    amplitudes: tuple = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
    allow_large_amplitudes: bool = False
    plateau_growth: float = PLATEAU_GROWTH_LIMIT
    decomposition: bool = True
    p_values: tuple = DEFAULT_P_VALUES
    sweep_max_amplitude: float = 4.0
    variation_limit: float = SWEEP_VARIATION_LIMIT
    duality: bool = True
    duality_t: float = 0.5
    duality_dts: tuple = (2e-3, 1e-3, 5e-4)
    duality_u_k0: float = 4.0
    duality_u_seed: int = 1
    duality_k0: float = 3.0
    duality_seed: int = 7
    duality_tolerance: float = 1e-4
    decay: bool = False
    decay_pairs: tuple = ((2.0, math.inf), (2.0, 4.0), (2.0, 6.0))
    decay_n: int = 256
    decay_k_cut: float = 40.0
    decay_window: tuple = (1.0 / 400.0, 1.0 / 16.0)
    decay_tolerance: float = 0.05
    l1_decay: bool = False
    l1_q: tuple = (2.0, 4.0, math.inf)
    l1_n: int = 512
    l1_width_cells: float = 4.0
    l1_window_end: float = 0.25
    l1_tolerance: float = 0.07
    hls: bool = True
    hls_alpha: float = 0.25
    hls_r: float = 8.0 / 7.0
    gn: bool = True
    gn_p: float = 6.0
    # source location of every key read from a file, for diagnostics
    locations: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def grid(self) -> Grid:
        return Grid(self.n, self.length, self.dealias_fraction)

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(dt=self.dt, T=self.T, n=self.n, L=self.length, dealias_fraction=self.dealias_fraction,
                            sample_stride=self.sample_stride, cfl_safety=self.cfl_safety,
                            dissipation_rule=self.dissipation_rule)

    def _fail(self, attr, message):
        for (section, key), line in self.locations.items():
            if _SCHEMA[section][key][0] == attr:
                raise ConfigError(message, section, key, line)
        raise ConfigError(message, key=attr)

    def validate(self) -> ExperimentConfig:
        """Check cross-field preconditions of the modules the experiment will call."""
        try:
            self.grid
        except ValueError as exc:
            self._fail("n", str(exc))
        try:
            self.solver
        except ValueError as exc:
            self._fail("dt", str(exc))
        if self.data not in ("random", "taylor_green", "zero"):
            self._fail("data", f"unknown data kind {self.data!r}")
        if self.seeds < 1:
            self._fail("seeds", "need at least one seed")
        if not self.amplitudes:
            self._fail("amplitudes", "amplitude list must be nonempty")
        if any(a < 0 for a in self.amplitudes):
            self._fail("amplitudes", "amplitudes must be nonnegative")
        if max(self.amplitudes) > MAX_DEFAULT_AMPLITUDE and not self.allow_large_amplitudes:
            self._fail("amplitudes", f"amplitudes above {MAX_DEFAULT_AMPLITUDE:g} need allow_large_amplitudes = true")
        if self.data == "random" and not 0 < self.k0 <= self.grid.dealias_cutoff:
            self._fail("k0", f"k0 must lie in (0, {self.grid.dealias_cutoff:g}]")
        if any(not p > 4 for p in self.p_values):
            self._fail("p_values", "every p must exceed 4")
        if self.duality and self.data == "random" and not 0 < self.duality_u_k0 <= self.grid.dealias_cutoff:
            self._fail("duality_u_k0", f"duality_u_k0 must lie in (0, {self.grid.dealias_cutoff:g}]")
        if self.duality:
            steps = self.duality_t / np.array(self.duality_dts)
            if len(self.duality_dts) < 2 or np.any(np.abs(steps - np.round(steps)) > 1e-9 * steps):
                self._fail("duality_dts", "need >= 2 step sizes dividing duality_t")
        for r, p in self.decay_pairs:
            if not 1 < r <= p:
                self._fail("decay_pairs", f"need 1 < r <= p, got {r}:{p}")
        if len(self.decay_window) != 2 or not 0 < self.decay_window[0] < self.decay_window[1]:
            self._fail("decay_window", "need two increasing positive times")
        if any(not q > 1 for q in self.l1_q):
            self._fail("l1_q", "every q must exceed 1")
        if self.hls:
            try:
                HlsParams.from_alpha_r(self.hls_alpha, self.hls_r)
            except ValueError as exc:
                self._fail("hls_r", str(exc))
        if not self.gn_p > 2:
            self._fail("gn_p", "gn_p must exceed 2")
        return self


def _key_lines(text: str) -> dict:
    """Map (section, key) to its 1-based line number in an INI text."""
    lines, section = {}, None
    for i, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), i)
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", s)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip()), i)
    return lines


def parse_config_text(text: str, base_dir=None) -> ExperimentConfig:
    lines = _key_lines(text)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " "), line=getattr(exc, "lineno", None)) from None
    values, locations = {}, {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError("unknown section", section, line=lines.get((section, None)))
        for key, raw in cp.items(section):
            line = lines.get((section, key))
            if key not in _SCHEMA[section]:
                raise ConfigError("unknown key", section, key, line)
            attr, parse = _SCHEMA[section][key]
            try:
                values[attr] = parse(raw)
            except ValueError as exc:
                raise ConfigError(f"cannot parse {raw!r}: {exc}", section, key, line) from None
            locations[(section, key)] = line
    if "output" in values and base_dir is not None and not Path(values["output"]).is_absolute():
        values["output"] = str(Path(base_dir) / values["output"])
    return ExperimentConfig(**values, locations=locations).validate()


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror}") from None
    return parse_config_text(text, base_dir=p.parent)


# ---------------------------------------------------------------------------
# ensemble


def initial_data(cfg: ExperimentConfig, seed, amplitude: float) -> SpectralVectorField:
    grid = cfg.grid
    if cfg.data == "zero" or amplitude == 0.0:
        return SpectralVectorField.zeros(grid)
    if cfg.data == "taylor_green":
        tg = taylor_green(grid)
        return tg * (amplitude / norm_l2(tg))
    return random_solenoidal(grid, cfg.k0, seed, amplitude)


@dataclass
class MemberResult:
    seed_index: int
    amplitude: float
    energy: AuditReport
    record: DecompositionRecord


def run_member(cfg: ExperimentConfig, seed_index: int, seed, amplitude: float) -> MemberResult:
    """Integrate one ensemble member and reduce it to its norm series (snapshots dropped)."""
    u0 = initial_data(cfg, seed, amplitude)
    traj = integrate(u0, cfg.solver, store_step_energy=False)
    energy = energy_identity_audit(traj, cfg.energy_tolerance)
    energy.params.update({"seed_index": seed_index, "amplitude": amplitude})
    record = decompose(traj, cfg.p_values).detach()
    return MemberResult(seed_index, amplitude, energy, record)


def _run_member_args(args):
    return run_member(*args)


def run_ensemble(cfg: ExperimentConfig, workers: int | None = None) -> list[MemberResult]:
    """All (seed, amplitude) members, in that deterministic order."""
    seeds = ensemble_seeds(cfg.base_seed, cfg.seeds)
    jobs = [(cfg, i, s, float(a)) for i, s in enumerate(seeds) for a in cfg.amplitudes]
    if workers is None:
        workers = int(os.environ.get("AUDIT_WORKERS", "1") or 1)
    if workers <= 1 or len(jobs) == 1:
        return [run_member(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_member_args, jobs))


# ---------------------------------------------------------------------------
# theorem ratio


@dataclass(frozen=True)
class TheoremRow:
    seed_index: int
    amplitude: float
    u0_l2: float
    integral: float
    tail: float
    ratio: float
    w_integral: float
    v_integral: float
    breakdown_holds: bool

    @property
    def tail_fraction(self) -> float:
        return self.tail / self.integral if self.integral > 0 else 0.0


@dataclass
class TheoremReport:
    rows: list
    max_ratio: float
    status: str
    growth: dict

    def to_audit_report(self) -> AuditReport:
        return AuditReport(
            name="theorem_ratio", params={"rows": len(self.rows)},
            lhs=self.max_ratio, fitted_constant=self.max_ratio, status=self.status,
            tail_bound=max((r.tail for r in self.rows), default=0.0),
            details={"rows": [asdict(r) for r in self.rows], "growth": self.growth},
        )


def theorem_ratio_audit(results, growth_limit: float = PLATEAU_GROWTH_LIMIT,
                        tail_tol: float = TAIL_FRACTION_LIMIT) -> TheoremReport:
    """R = (int_0^inf ||u||_inf^2)^(1/2) / ((1 + ||u0||_2) ||u0||_2) over seeds x amplitudes.

    ``results`` holds (seed_index, amplitude, record) triples or MemberResults.
    Fails when a row violates int ||u||^2 <= 2 int ||w||^2 + 2 int ||v||^2 or when
    R at the largest amplitude exceeds ``growth_limit`` times R at the next one;
    inconclusive when some tail fraction exceeds ``tail_tol``.
    """
    items = [(r.seed_index, r.amplitude, r.record) if isinstance(r, MemberResult) else tuple(r) for r in results]
    if not items:
        raise ValueError("empty ensemble: nothing to audit")
    rows = []
    for seed_index, amplitude, rec in sorted(items, key=lambda x: (x[0], x[1])):
        a = rec.u0_l2
        iu, iw, iv = rec.sup_integral("u"), rec.sup_integral("w"), rec.sup_integral("v")
        ratio = math.sqrt(iu.value) / ((1.0 + a) * a) if a > 0 else 0.0
        holds = iu.value <= 2.0 * iw.value + 2.0 * iv.value
        rows.append(TheoremRow(seed_index, float(amplitude), a, iu.value, iu.tail, ratio, iw.value, iv.value, holds))
    growth = {}
    for seed_index in sorted({r.seed_index for r in rows}):
        mine = sorted((r for r in rows if r.seed_index == seed_index and r.amplitude > 0), key=lambda r: r.amplitude)
        if len(mine) >= 2:
            lo, hi = mine[-2], mine[-1]
            growth[str(seed_index)] = hi.ratio / lo.ratio if lo.ratio > 0 else (0.0 if hi.ratio == 0 else math.inf)
    if not all(r.breakdown_holds for r in rows) or any(g > growth_limit for g in growth.values()):
        status = FAIL
    elif any(r.tail_fraction > tail_tol for r in rows):
        status = INCONCLUSIVE
    else:
        status = PASS
    return TheoremReport(rows, max((r.ratio for r in rows), default=0.0), status, growth)


def write_theorem_csv(path, report: TheoremReport) -> None:
    header = ["seed_index", "amplitude", "u0_l2", "integral", "tail", "ratio", "w_integral", "v_integral",
              "breakdown_holds"]
    write_csv(path, header, ([getattr(r, h) for h in header] for r in report.rows))


# ---------------------------------------------------------------------------
# plot data


def emit_plotdata(reports, directory) -> list[Path]:
    """Write the three ``x,y,series`` files: decay fits, ratio vs amplitude, duality refinement."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    decay, ratio, refine = [], [], []
    for rep in reports:
        det = rep.details
        if rep.name == "stokes_decay":
            label = f"stokes r={rep.params['r']:g} p={rep.params['p']:g}"
            decay += [(math.log(t), math.log(v), label) for t, v in zip(det["times"], det["values"])]
        elif rep.name == "l1_decay":
            q = rep.params["q"]
            decay += [(math.log(t), math.log(v), f"l1 q={q:g}") for t, v in zip(det["times"], det["values"])]
            decay += [(math.log(t), math.log(v), f"l1 grad q={q:g}")
                      for t, v in zip(det["times"], det["grad_values"])]
        elif rep.name == "theorem_ratio":
            ratio += [(row["u0_l2"], row["ratio"], f"seed {row['seed_index']}") for row in det["rows"]]
        elif rep.name == "duality_convergence":
            refine += [(dt, err, "duality") for dt, err in zip(rep.params["dts"], det["discrepancies"])]
    paths = []
    for name, rows in zip(PLOT_FILES, (decay, ratio, refine)):
        path = d / name
        write_csv(path, ["x", "y", "series"], rows)
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# experiment


def _hls_family():
    t = np.linspace(0.0, 1.0, 201)
    return [SampledFunction(t, np.where(t < 1.0, 1.0, 0.0)),
            SampledFunction(t, t * (1.0 - t)),
            SampledFunction(t, np.sin(np.pi * t) ** 2)]


def _gn_family():
    return [random_solenoidal(Grid(n), 4, seed, 1.0) for n, seed in ((32, 1), (64, 1), (128, 1))]


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> tuple[int, list[Path]]:
    """Run the selected audit battery; returns (exit status, files written)."""
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    reports: list[AuditReport] = []
    files: list[Path] = []

    if cfg.decay:
        u0 = _decay_data(cfg)
        for r, p in cfg.decay_pairs:
            reports.append(decay_audit(u0, r, p, cfg.decay_window, tol=cfg.decay_tolerance))
    if cfg.l1_decay:
        grid = Grid(cfg.l1_n, cfg.length)
        width = cfg.l1_width_cells * grid.spacing
        for q in cfg.l1_q:
            reports.append(l1_decay_audit(grid, 1.0, width, q, (4 * width**2, cfg.l1_window_end),
                                          tol=cfg.l1_tolerance))
    if cfg.hls:
        reports.append(hls_bound_audit(_hls_family(), HlsParams.from_alpha_r(cfg.hls_alpha, cfg.hls_r)))
    if cfg.gn:
        p = cfg.gn_p
        reports.append(gn_audit(_gn_family(), p, 2.0, 2.0, (p - 2.0) / p))

    members = run_ensemble(cfg, workers)
    reports += [m.energy for m in members]
    if cfg.decomposition:
        for seed_index in range(cfg.seeds):
            sweep = sorted((m for m in members if m.seed_index == seed_index and m.amplitude <= cfg.sweep_max_amplitude),
                           key=lambda m: m.amplitude)
            if not sweep:
                continue
            recs = [m.record for m in sweep]
            for p in cfg.p_values:
                rep = proposition_bound_audit(recs, p, cfg.variation_limit)
                rep.params["seed_index"] = seed_index
                reports.append(rep)
                rep = proof_chain_sweep_audit(recs, p, cfg.variation_limit)
                rep.params["seed_index"] = seed_index
                reports.append(rep)
            rep = perturbation_sup_integral_audit(recs, [m.amplitude for m in sweep])
            rep.params["seed_index"] = seed_index
            reports.append(rep)
            for m in sweep:
                for p in cfg.p_values:
                    path = out / f"proposition_s{seed_index}_a{m.amplitude:g}_p{p:g}.csv"
                    write_ratio_csv(path, m.record, p)
                    files.append(path)
        theorem = theorem_ratio_audit(members, cfg.plateau_growth)
        reports.append(theorem.to_audit_report())
        path = out / THEOREM_FILE
        write_theorem_csv(path, theorem)
        files.append(path)
    if cfg.duality:
        reports.append(_duality_report(cfg))

    path = out / REPORTS_FILE
    write_reports(path, reports)
    files.append(path)
    files += emit_plotdata(reports, out)
    return EXIT_CODES[combine_status(r.status for r in reports)], files


def _decay_data(cfg: ExperimentConfig) -> SpectralVectorField:
    return point_vortex(Grid(cfg.decay_n, cfg.length), cfg.decay_k_cut)


def _duality_report(cfg: ExperimentConfig) -> AuditReport:
    """Self-convergence of the duality identity on its own random u0 (or the configured data kind)."""
    grid = cfg.grid
    positive = [a for a in cfg.amplitudes if a > 0]
    if cfg.data == "random" and positive:
        u0 = random_solenoidal(grid, cfg.duality_u_k0, cfg.duality_u_seed, 1.0)
    else:
        u0 = initial_data(cfg, None, 1.0 if positive else 0.0)
    phi0 = random_solenoidal(grid, cfg.duality_k0, cfg.duality_seed, 1.0)
    return duality_convergence(u0, phi0, cfg.duality_t, cfg.duality_dts, tol=cfg.duality_tolerance)


# ---------------------------------------------------------------------------
# command line


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _print_reports(reports) -> None:
    for r in reports:
        print(r.summary_line())


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    code, files = run_experiment(cfg)
    _print_reports(read_reports(Path(cfg.output) / REPORTS_FILE))
    print(f"wrote {len(files)} files to {cfg.output}")
    return code


def cmd_taylor_green(args) -> int:
    oracle, traj = taylor_green_oracle_audit(n=args.n, dt=args.dt, T=args.T, sample_stride=args.stride)
    reports = [oracle, energy_identity_audit(traj, tol=1e-8)]
    rec = decompose(traj)
    v_max = float(np.max(rec.series("v_sup")))
    reports.append(AuditReport(name="taylor_green_decomposition", params={"tolerance": 1e-8},
                               lhs=v_max, rhs=1e-8, status=PASS if v_max <= 1e-8 else FAIL))
    phi0 = random_solenoidal(traj.grid, 3, 7, 1.0)
    lhs, rhs = duality_sides(rec, phi0, float(traj.times[-1]))
    gap = abs(lhs - rhs)
    reports.append(AuditReport(name="taylor_green_duality", params={"t": float(traj.times[-1]), "tolerance": 1e-8},
                               lhs=lhs, rhs=rhs, status=PASS if gap <= 1e-8 else FAIL,
                               details={"abs_discrepancy": gap}))
    reports.append(proposition_bound_audit(rec, 6.0))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_reports(out / REPORTS_FILE, reports)
    _print_reports(reports)
    return EXIT_CODES[combine_status(r.status for r in reports)]


def cmd_hls(args) -> int:
    try:
        params = HlsParams.from_alpha_r(args.alpha, args.r)
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    rep = hls_bound_audit(_hls_family(), params)
    print(json.dumps(rep.to_dict(), indent=2, sort_keys=True))
    return EXIT_CODES[rep.status]


def cmd_report(args) -> int:
    path = Path(args.directory) / REPORTS_FILE
    if not path.is_file():
        print(f"no {REPORTS_FILE} in {args.directory}", file=sys.stderr)
        return USAGE_ERROR
    reports = read_reports(path)
    _print_reports(reports)
    status = combine_status(r.status for r in reports)
    print(f"overall: {status} ({len(reports)} audits)")
    return EXIT_CODES[status]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="audit", description="Navier-Stokes a priori estimate audits")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("run", help="run the audit battery described by a config file")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("taylor-green", help="Taylor-Green smoke audits")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--stride", type=int, default=10)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_taylor_green)
    p = sub.add_parser("hls", help="fractional-integration bound for given alpha and r")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    p.set_defaults(func=cmd_hls)
    p = sub.add_parser("report", help="summarize reports.json in a results directory")
    p.add_argument("directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
