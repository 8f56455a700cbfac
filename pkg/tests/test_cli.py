import json
import math
from pathlib import Path

import pytest

from nsaudit.cli import (PLOT_FILES, REPORTS_FILE, THEOREM_FILE, USAGE_ERROR, ConfigError, ExperimentConfig,
                         emit_plotdata, load_config, main, parse_config_text, run_ensemble, run_experiment,
                         theorem_ratio_audit)
from nsaudit.report import FAIL, PASS, AuditReport

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

TINY = """
[grid_spectral]
n = 32

[nse_solver]
dt = 0.01
T = 5.0
sample_stride = 2

[audit_cli]
output = {out}
seeds = 2
k0 = 4
amplitudes = 1, 2, 3

[decomposition_duality]
p_values = 6, 8
sweep_max_amplitude = 4
duality_t = 0.2
duality_dts = 0.01, 0.005, 0.0025
"""


def tiny(tmp_path, extra="", name="tiny.ini"):
    path = tmp_path / name
    path.write_text(TINY.format(out=tmp_path / "out") + extra)
    return path


class TestConfig:
    def test_defaults(self):
        cfg = parse_config_text("")
        assert cfg == ExperimentConfig()
        assert cfg.amplitudes == (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)

    def test_values_and_comments(self):
        cfg = parse_config_text("[audit_cli]\nseeds = 3  # three\namplitudes = 1, 2\n"
                                "[stokes_semigroup]\ndecay_pairs = 2:inf, 3:4\n")
        assert cfg.seeds == 3 and cfg.amplitudes == (1.0, 2.0)
        assert cfg.decay_pairs == ((2.0, math.inf), (3.0, 4.0))

    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigError) as exc:
            parse_config_text("[nse_solver]\ndt = 0.01\n\nstep = 3\n")
        assert exc.value.line == 4 and exc.value.key == "step"
        assert "line 4" in str(exc.value)

    def test_unknown_section(self):
        with pytest.raises(ConfigError) as exc:
            parse_config_text("# header\n[solver]\ndt = 1\n")
        assert exc.value.line == 2 and exc.value.section == "solver"

    def test_keys_are_case_sensitive(self):
        with pytest.raises(ConfigError):
            parse_config_text("[nse_solver]\nt = 1.0\n")

    def test_parse_error(self):
        with pytest.raises(ConfigError) as exc:
            parse_config_text("[audit_cli]\nseeds = two\n")
        assert exc.value.line == 2

    @pytest.mark.parametrize("text, key", [
        ("[audit_cli]\namplitudes = 1, 16\n", "amplitudes"),
        ("[audit_cli]\namplitudes = -1\n", "amplitudes"),
        ("[nse_solver]\ndt = 0.007\n", "dt"),
        ("[decomposition_duality]\np_values = 4, 6\n", "p_values"),
        ("[audit_cli]\ndata = vortex\n", "data"),
        ("[audit_cli]\nk0 = 40\n", "k0"),
        ("[inequality_toolkit]\nhls_r = 5\n", "hls_r"),
    ])
    def test_validation_locates_key(self, text, key):
        with pytest.raises(ConfigError) as exc:
            parse_config_text(text)
        assert exc.value.key == key and exc.value.line == 2

    def test_large_amplitudes_opt_in(self):
        cfg = parse_config_text("[audit_cli]\namplitudes = 16\nallow_large_amplitudes = yes\n")
        assert cfg.amplitudes == (16.0,)

    def test_output_relative_to_file(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[audit_cli]\noutput = res\n")
        assert load_config(path).output == str(tmp_path / "res")

    def test_shipped_configs_parse(self):
        for path in sorted(CONFIGS.glob("*.ini")):
            load_config(path)


class TestCommands:
    def test_missing_config_exits_3(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "none.ini")]) == USAGE_ERROR
        assert "config error" in capsys.readouterr().err

    def test_bad_config_exits_3(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[audit_cli]\nbogus = 1\n")
        assert main(["run", str(path)]) == USAGE_ERROR

    def test_usage_error_exits_3(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == USAGE_ERROR

    def test_hls(self, capsys):
        assert main(["hls", "--alpha", "0.25", "--r", str(8 / 7)]) == 0
        assert json.loads(capsys.readouterr().out)["status"] == PASS
        assert main(["hls", "--alpha", "0.9", "--r", "1.5"]) == USAGE_ERROR

    def test_taylor_green(self, tmp_path, capsys):
        code = main(["taylor-green", "--n", "32", "--dt", "0.002", "--T", "0.2", "--stride", "10",
                     "--out", str(tmp_path)])
        assert code == 0
        names = [r["name"] for r in json.loads((tmp_path / REPORTS_FILE).read_text())]
        assert names == ["taylor_green_oracle", "energy_identity", "taylor_green_decomposition",
                         "taylor_green_duality", "proposition_bound"]

    def test_report(self, tmp_path, capsys):
        assert main(["report", str(tmp_path)]) == USAGE_ERROR
        (tmp_path / REPORTS_FILE).write_text(json.dumps([AuditReport("a").to_dict(),
                                                         AuditReport("b", status=FAIL).to_dict()]))
        assert main(["report", str(tmp_path)]) == 1
        assert "overall: fail (2 audits)" in capsys.readouterr().out

    def test_zero_config(self, tmp_path):
        path = tmp_path / "zero.ini"
        path.write_text((CONFIGS / "zero.ini").read_text().replace("../results/zero", "out"))
        assert main(["run", str(path)]) == 0
        reports = json.loads((tmp_path / "out" / REPORTS_FILE).read_text())
        theorem = next(r for r in reports if r["name"] == "theorem_ratio")
        assert theorem["lhs"] == 0.0 and theorem["pass"]


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("tiny")
    cfg = load_config(tiny(d))
    code, files = run_experiment(cfg)
    return cfg, code, files


class TestExperiment:
    def test_passes_and_writes_files(self, tiny_run):
        cfg, code, files = tiny_run
        out = Path(cfg.output)
        assert code == 0
        names = {f.name for f in files}
        assert {REPORTS_FILE, THEOREM_FILE, *PLOT_FILES} <= names
        assert "proposition_s1_a3_p8.csv" in names
        assert all(f.is_file() and f.parent == out for f in files)

    def test_report_contents(self, tiny_run):
        cfg, _, _ = tiny_run
        reports = json.loads((Path(cfg.output) / REPORTS_FILE).read_text())
        counts = {}
        for r in reports:
            counts[r["name"]] = counts.get(r["name"], 0) + 1
        assert counts == {"hls_bound": 1, "gagliardo_nirenberg": 1, "energy_identity": 6, "proposition_bound": 4,
                          "proof_chain_sweep": 4, "perturbation_sup_integral": 2, "theorem_ratio": 1,
                          "duality_convergence": 1}

    def test_plot_headers(self, tiny_run):
        cfg, _, _ = tiny_run
        for name in PLOT_FILES:
            assert (Path(cfg.output) / name).read_text().splitlines()[0] == "x,y,series"
        rows = (Path(cfg.output) / "plot_ratio_amplitude.csv").read_text().splitlines()[1:]
        assert len(rows) == 6

    def test_deterministic(self, tiny_run, tmp_path):
        cfg, _, _ = tiny_run
        again = load_config(tiny(tmp_path))
        run_experiment(again)
        for name in (REPORTS_FILE, THEOREM_FILE, *PLOT_FILES):
            assert (Path(again.output) / name).read_bytes() == (Path(cfg.output) / name).read_bytes()

    def test_injected_failure_sets_exit_code(self, tmp_path):
        # an unattainable energy tolerance must surface as a failing run
        cfg = ExperimentConfig(n=32, dt=0.01, T=0.5, k0=4.0, seeds=1, amplitudes=(1.0,), energy_tolerance=1e-30,
                               output=str(tmp_path), duality=False, hls=False, gn=False)
        code, _ = run_experiment(cfg.validate())
        assert code == 1
        reports = json.loads((tmp_path / REPORTS_FILE).read_text())
        assert [r["status"] for r in reports if r["name"] == "energy_identity"] == [FAIL]


def test_parallel_matches_serial(tmp_path):
    cfg = ExperimentConfig(n=32, dt=0.01, T=0.5, k0=4.0, amplitudes=(1.0, 2.0), output=str(tmp_path))
    serial = run_ensemble(cfg, workers=1)
    parallel = run_ensemble(cfg, workers=2)
    for a, b in zip(serial, parallel):
        assert (a.seed_index, a.amplitude) == (b.seed_index, b.amplitude)
        assert a.record.series("v_sup").tolist() == b.record.series("v_sup").tolist()


def test_empty_ensemble_is_an_error():
    with pytest.raises(ValueError, match="empty ensemble"):
        theorem_ratio_audit([])


def test_emit_plotdata_empty(tmp_path):
    paths = emit_plotdata([], tmp_path)
    assert [p.name for p in paths] == list(PLOT_FILES)
    assert all(p.read_text() == "x,y,series\n" for p in paths)
