"""Tests for the TOML config schema and the experiment runner."""

import json
import subprocess
import sys

import numpy as np
import pytest

from kfpcert.cli import report_bundle, run_cli, write_decay_svg, write_report
from kfpcert.config import (
    ConfigError,
    build_general_model,
    build_model_spec,
    build_weight_spec,
    load_config,
    validate_config,
)
from kfpcert.model import ContractError, FitzHughNagumo, KineticFokkerPlanck
from kfpcert.solver import build_grid, GridField, load_field, save_field
from kfpcert.weights import GaussianQuadratic, KfpWeight

GAMMA5_WORKED = 0.9478187001183640

HARRIS_TOML = """
experiment = "harris-rate"

[run]
alpha = 1.0
b = 1.0
T = 1.0
mu_mass = 0.5
m_of_R = 8.0
"""

SIMULATE_TOML = """
experiment = "simulate"

[model]
kind = "fhn"

[weight]
kind = "gaussian"
r = 0.1

[grid]
Lx = 4.0
Lv = 4.0
nx = 32
nv = 32

[run]
t_end = 0.5
observations = 5
seed = 3
"""


@pytest.fixture(autouse=True)
def pinned_epoch(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(tmp_path, subcommand, toml_text, extra=(), name="cfg.toml", out="out"):
    cfg = write(tmp_path, name, toml_text)
    outdir = tmp_path / out
    code = run_cli([subcommand, "--config", cfg, "--out", str(outdir), *extra])
    return code, outdir


class TestConfigValidation:
    def test_all_problems_listed_at_once(self):
        with pytest.raises(ConfigError) as exc:
            validate_config(
                {
                    "experiment": "simulate",
                    "model": {"kind": "kfp", "gama": 2.0},
                    "run": {"t_end": -1.0, "typo": 1, "observations": 1},
                }
            )
        errors = exc.value.errors
        assert any("model.gama" in e for e in errors)
        assert any("run.typo" in e for e in errors)
        assert any("'grid'" in e for e in errors)
        assert any("t_end" in e for e in errors)
        assert any("observations" in e for e in errors)
        assert len(errors) == 5

    def test_missing_grid_names_grid(self):
        with pytest.raises(ConfigError, match="'grid'"):
            validate_config(
                {
                    "experiment": "simulate",
                    "model": {"kind": "kfp"},
                    "run": {"t_end": 1.0},
                }
            )

    def test_experiment_enum(self):
        with pytest.raises(ConfigError, match="experiment"):
            validate_config({"experiment": "simulte"})

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown key 'wieght'"):
            validate_config(
                {
                    "experiment": "harris-rate",
                    "wieght": {},
                    "run": {"alpha": 1.0, "b": 1.0, "T": 1.0, "mu_mass": 0.5, "m_of_R": 8.0},
                }
            )

    def test_bool_is_not_an_int(self):
        with pytest.raises(ConfigError, match="grid.nx"):
            validate_config(
                {
                    "experiment": "steady-state",
                    "model": {"kind": "kfp"},
                    "grid": {"Lx": 4.0, "Lv": 4.0, "nx": True, "nv": 32},
                    "run": {},
                }
            )

    def test_tolerances_positive(self):
        with pytest.raises(ConfigError, match="run.tol"):
            validate_config(
                {
                    "experiment": "steady-state",
                    "model": {"kind": "kfp"},
                    "grid": {"Lx": 4.0, "Lv": 4.0, "nx": 16, "nv": 16},
                    "run": {"tol": 0.0},
                }
            )

    def test_sink_keys_paired(self):
        with pytest.raises(ConfigError, match="sink"):
            validate_config(
                {
                    "experiment": "simulate",
                    "model": {"kind": "kfp"},
                    "grid": {"Lx": 4.0, "Lv": 4.0, "nx": 16, "nv": 16},
                    "run": {"t_end": 1.0, "sink_M": 5.0},
                }
            )

    def test_initial_enum(self):
        with pytest.raises(ConfigError, match="run.initial"):
            validate_config(
                {
                    "experiment": "simulate",
                    "model": {"kind": "kfp"},
                    "grid": {"Lx": 4.0, "Lv": 4.0, "nx": 16, "nv": 16},
                    "run": {"t_end": 1.0, "initial": "banana"},
                }
            )

    def test_seed_u64_range(self):
        with pytest.raises(ConfigError, match="seed"):
            validate_config(
                {
                    "experiment": "report",
                    "run": {"sections": [], "seed": 2**64},
                }
            )

    def test_weight_kind_enum(self):
        with pytest.raises(ConfigError, match="weight.kind"):
            validate_config(
                {
                    "experiment": "verify",
                    "model": {"kind": "fhn"},
                    "weight": {"kind": "gauss", "r": 0.1},
                    "run": {"box": 6.0},
                }
            )

    def test_valid_config_echoes_raw(self):
        data = {
            "experiment": "harris-rate",
            "run": {"alpha": 1.0, "b": 1.0, "T": 1.0, "mu_mass": 0.5, "m_of_R": 8.0},
        }
        cfg = validate_config(data)
        assert cfg.experiment == "harris-rate"
        assert cfg.raw == data

    def test_toml_parse_error(self, tmp_path):
        path = write(tmp_path, "broken.toml", "experiment = [unclosed\n")
        with pytest.raises(ConfigError, match="TOML"):
            load_config(path)


class TestBuilders:
    def test_model_specs(self):
        cfg = validate_config(
            {
                "experiment": "subsolution",
                "model": {"kind": "kfp", "gamma": 5.0, "beta": 4.0},
                "run": {"r": 1.0, "alpha": 2.0},
            }
        )
        spec = build_model_spec(cfg)
        assert isinstance(spec, KineticFokkerPlanck)
        assert (spec.gamma, spec.beta) == (5.0, 4.0)
        assert build_general_model(cfg).K == 1.0

    def test_fhn_spec(self):
        cfg = validate_config(
            {
                "experiment": "subsolution",
                "model": {"kind": "fhn", "a": 2.0},
                "run": {"r": 1.0, "alpha": 2.0},
            }
        )
        spec = build_model_spec(cfg)
        assert isinstance(spec, FitzHughNagumo)
        assert spec.a == 2.0

    def test_weight_specs(self):
        cfg = validate_config(
            {
                "experiment": "verify",
                "model": {"kind": "kfp"},
                "weight": {"kind": "kfp", "lam": 0.05, "eps": 0.1, "gamma": 2.0},
                "run": {"box": 6.0},
            }
        )
        w = build_weight_spec(cfg)
        assert isinstance(w, KfpWeight)
        assert (w.lam, w.eps) == (0.05, 0.1)

    def test_absent_weight_is_none(self):
        cfg = validate_config(
            {
                "experiment": "simulate",
                "model": {"kind": "kfp"},
                "grid": {"Lx": 4.0, "Lv": 4.0, "nx": 16, "nv": 16},
                "run": {"t_end": 1.0},
            }
        )
        assert build_weight_spec(cfg) is None


class TestCheckpointFormat:
    def test_random_field_roundtrips_bitwise(self, tmp_path):
        grid = build_grid(2.5, 1.5, 32, 32)
        rng = np.random.default_rng(7)
        f = GridField(grid=grid, data=rng.random((32, 32)), t=0.125)
        path = tmp_path / "f.txt"
        save_field(f, path)
        g = load_field(path)
        assert np.array_equal(g.data, f.data)
        assert g.grid == f.grid and g.t == f.t

    def test_v2_header_unsupported(self, tmp_path):
        path = tmp_path / "f.txt"
        path.write_text("kfp-field v2 2 2 1.0 1.0 0.0\n1 0\n0 1\n")
        with pytest.raises(ContractError, match="unsupported checkpoint version"):
            load_field(path)

    def test_truncated_body(self, tmp_path):
        grid = build_grid(1.0, 1.0, 8, 8)
        f = GridField(grid=grid, data=np.ones((8, 8)), t=0.0)
        path = tmp_path / "f.txt"
        save_field(f, path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:5]) + "\n")
        with pytest.raises(ContractError, match="shape"):
            load_field(path)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "f.txt"
        path.write_text("kfp-field v1 4 4\n")
        with pytest.raises(ContractError, match="malformed"):
            load_field(path)


class TestReportBundle:
    def test_empty_reports(self):
        bundle = report_bundle([], {"experiment": "report"})
        assert bundle["sections"] == {}
        assert bundle["config"] == {"experiment": "report"}
        assert bundle["warnings"] == []
        assert "timestamp" in bundle["provenance"]

    def test_two_sections_present(self):
        bundle = report_bundle(
            [("verify", {"success": True}), ("simulate", {"t_end": 1.0})], {}
        )
        assert set(bundle["sections"]) == {"verify", "simulate"}

    def test_duplicate_last_writer_wins(self):
        bundle = report_bundle([("a", {"v": 1}), ("a", {"v": 2})], {})
        assert bundle["sections"]["a"] == {"v": 2}
        assert any("duplicate section 'a'" in w for w in bundle["warnings"])

    def test_numpy_payload_serializes(self, tmp_path):
        bundle = report_bundle(
            [("x", {"arr": np.arange(3.0), "val": np.float64(0.5), "flag": np.True_})],
            {},
        )
        path = tmp_path / "r.json"
        write_report(bundle, path)
        back = json.loads(path.read_text())
        assert back["sections"]["x"] == {"arr": [0.0, 1.0, 2.0], "val": 0.5, "flag": True}

    def test_grid_hash_stable(self):
        grid = build_grid(6.0, 6.0, 128, 128)
        b1 = report_bundle([], {}, grid=grid)
        b2 = report_bundle([], {}, grid=build_grid(6.0, 6.0, 128, 128))
        assert b1["provenance"]["grid_sha256"] == b2["provenance"]["grid_sha256"]
        assert len(b1["provenance"]["grid_sha256"]) == 64


class TestDecaySvg:
    def test_needs_two_positive_points(self, tmp_path):
        assert not write_decay_svg([(0.0, 1.0)], tmp_path / "a.svg")
        assert not write_decay_svg([(0.0, -1.0), (1.0, 0.0)], tmp_path / "b.svg")

    def test_polyline_written(self, tmp_path):
        path = tmp_path / "c.svg"
        assert write_decay_svg([(0.0, 1.0), (1.0, 0.1), (2.0, 0.01)], path)
        text = path.read_text()
        assert "<polyline" in text and "</svg>" in text


class TestRunHarris:
    def test_worked_inputs(self, tmp_path):
        code, outdir = run(tmp_path, "harris-rate", HARRIS_TOML)
        assert code == 0
        doc = json.loads((outdir / "report.json").read_text())
        section = doc["sections"]["harris_rate"]
        assert section["gamma5"] == pytest.approx(GAMMA5_WORKED, abs=1e-12)
        assert section["lam"] > 0.0
        assert (outdir / "observations.csv").read_text() == "t,observable,value\n"

    def test_rejected_inputs_exit_2(self, tmp_path, capsys):
        bad = HARRIS_TOML.replace("m_of_R = 8.0", "m_of_R = 1.0")
        code, _ = run(tmp_path, "harris-rate", bad)
        assert code == 2
        assert "m_of_R" in capsys.readouterr().err


class TestRunSimulate:
    def test_t_end_zero_empty_log(self, tmp_path):
        toml = SIMULATE_TOML.replace("t_end = 0.5", "t_end = 0.0")
        code, outdir = run(tmp_path, "simulate", toml)
        assert code == 0
        assert (outdir / "observations.csv").read_text() == "t,observable,value\n"
        doc = json.loads((outdir / "report.json").read_text())
        assert doc["sections"]["simulate"]["mass_ok"]

    def test_short_run_artifacts(self, tmp_path):
        toml = SIMULATE_TOML + "svg = true\ncheckpoint = true\n"
        code, outdir = run(tmp_path, "simulate", toml)
        assert code == 0
        doc = json.loads((outdir / "report.json").read_text())
        section = doc["sections"]["simulate"]
        assert section["negative_cells"] == 0
        assert section["mass_drift_rel"] <= 1e-10
        assert (outdir / "decay.svg").exists()
        f = load_field(outdir / "field_final.txt")
        assert f.t == pytest.approx(0.5)
        rows = (outdir / "observations.csv").read_text().splitlines()
        assert rows[0] == "t,observable,value"
        assert len(rows) > 5 * 5  # five observers, five ladder points

    def test_byte_determinism(self, tmp_path):
        code1, out1 = run(tmp_path, "simulate", SIMULATE_TOML, out="o1")
        code2, out2 = run(tmp_path, "simulate", SIMULATE_TOML, out="o2")
        assert code1 == code2 == 0
        assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
        assert (
            out1 / "observations.csv"
        ).read_bytes() == (out2 / "observations.csv").read_bytes()

    def test_seed_flag_overrides_config(self, tmp_path):
        code, outdir = run(tmp_path, "simulate", SIMULATE_TOML, extra=["--seed", "9"])
        assert code == 0
        doc = json.loads((outdir / "report.json").read_text())
        assert doc["provenance"]["seed"] == 9

    def test_svg_differs_only_in_generator_line(self, tmp_path, monkeypatch):
        toml = SIMULATE_TOML + "svg = true\n"
        _, out1 = run(tmp_path, "simulate", toml, out="o1")
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "1800000000")
        _, out2 = run(tmp_path, "simulate", toml, out="o2")
        lines1 = (out1 / "decay.svg").read_text().splitlines()
        lines2 = (out2 / "decay.svg").read_text().splitlines()
        diffs = [
            (a, b) for a, b in zip(lines1, lines2, strict=True) if a != b
        ]
        assert len(diffs) == 1
        assert "generator" in diffs[0][0]

    def test_sink_run_skips_mass_check(self, tmp_path):
        toml = SIMULATE_TOML + "sink_M = 5.0\nsink_R = 2.0\n"
        code, outdir = run(tmp_path, "simulate", toml)
        assert code == 0
        doc = json.loads((outdir / "report.json").read_text())
        section = doc["sections"]["simulate"]
        assert section["mass_final"] < section["mass_initial"]
        assert section["mass_ok"]


class TestRunVerifyAndFriends:
    def test_verify_failure_exits_3_with_report(self, tmp_path, capsys):
        toml = """
experiment = "verify"

[model]
kind = "fhn"

[weight]
kind = "gaussian"
r = 5.0

[run]
box = 6.0
n = 61
"""
        code, outdir = run(tmp_path, "verify", toml)
        assert code == 3
        doc = json.loads((outdir / "report.json").read_text())
        assert doc["sections"]["verify"]["success"] is False
        assert doc["sections"]["verify"]["failures"]
        assert "failure" in capsys.readouterr().err

    def test_subsolution_runs(self, tmp_path):
        toml = """
experiment = "subsolution"

[model]
kind = "fhn"

[run]
r = 1.0
alpha = 2.0
tau = 0.01
samples = 2048
"""
        code, outdir = run(tmp_path, "subsolution", toml)
        assert code == 0
        doc = json.loads((outdir / "report.json").read_text())
        section = doc["sections"]["subsolution"]
        assert section["ok"] is True
        assert section["params"]["c"] == 640.0

    def test_subsolution_bad_tau_exit_2(self, tmp_path, capsys):
        toml = """
experiment = "subsolution"

[model]
kind = "fhn"

[run]
r = 1.0
alpha = 2.0
tau = 0.9
"""
        code, _ = run(tmp_path, "subsolution", toml)
        assert code == 2
        assert "tau" in capsys.readouterr().err

    def test_regularize_rows(self, tmp_path):
        toml = """
experiment = "regularize"

[model]
kind = "kfp"

[weight]
kind = "gaussian"
r = 0.1

[grid]
Lx = 4.0
Lv = 4.0
nx = 32
nv = 32

[run]
t_ladder = [0.05, 0.1]
"""
        code, outdir = run(tmp_path, "regularize", toml)
        assert code == 0
        rows = (outdir / "observations.csv").read_text().splitlines()
        assert len(rows) == 3
        assert all("compensated" in r for r in rows[1:])
        doc = json.loads((outdir / "report.json").read_text())
        assert doc["sections"]["regularize"]["bounded"] is True

    def test_steady_state_artifacts(self, tmp_path):
        toml = """
experiment = "steady-state"

[model]
kind = "kfp"

[grid]
Lx = 4.0
Lv = 4.0
nx = 24
nv = 24

[run]
tol = 2e-3
max_time = 120.0
"""
        code, outdir = run(tmp_path, "steady-state", toml)
        assert code == 0
        f = load_field(outdir / "field_steady.txt")
        assert f.mass() == pytest.approx(1.0, rel=1e-12)
        assert np.all(f.data > 0.0)

    def test_budget_exceeded_exit_3(self, tmp_path, capsys):
        toml = """
experiment = "steady-state"

[model]
kind = "kfp"

[grid]
Lx = 4.0
Lv = 4.0
nx = 24
nv = 24

[run]
tol = 1e-12
max_time = 1.0
"""
        code, outdir = run(tmp_path, "steady-state", toml)
        assert code == 3
        doc = json.loads((outdir / "report.json").read_text())
        assert doc["sections"]["error"]["type"] == "BudgetExceeded"
        assert doc["sections"]["error"]["residual"] > 0.0
        assert "runtime failure" in capsys.readouterr().err


class TestRunReport:
    def test_merges_bundles_and_sections(self, tmp_path):
        code, out1 = run(tmp_path, "harris-rate", HARRIS_TOML, name="h.toml", out="h1")
        assert code == 0
        single = tmp_path / "extra.json"
        single.write_text(json.dumps({"section": "notes", "payload": {"k": 1}}))
        toml = f"""
experiment = "report"

[run]
sections = [
    "{out1 / 'report.json'}",
    "{single}",
    "{out1 / 'report.json'}",
]
"""
        code, outdir = run(tmp_path, "report", toml, name="r.toml", out="merged")
        assert code == 0
        doc = json.loads((outdir / "report.json").read_text())
        assert set(doc["sections"]) == {"harris_rate", "notes"}
        assert any("duplicate" in w for w in doc["warnings"])

    def test_bad_shape_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps([1, 2, 3]))
        toml = f"""
experiment = "report"

[run]
sections = ["{bad}"]
"""
        code, _ = run(tmp_path, "report", toml)
        assert code == 2
        assert "neither" in capsys.readouterr().err


class TestEntryPoint:
    def test_subcommand_config_mismatch(self, tmp_path, capsys):
        code, _ = run(tmp_path, "simulate", HARRIS_TOML)
        assert code == 2
        assert "harris-rate" in capsys.readouterr().err

    def test_unparseable_seed_exits_2(self, tmp_path, capsys):
        cfg = write(tmp_path, "h.toml", HARRIS_TOML)
        code = run_cli(
            ["harris-rate", "--config", cfg, "--out", str(tmp_path / "o"),
             "--seed", str(2**64)]
        )
        assert code == 2

    def test_missing_config_file_exits_2(self, tmp_path, capsys):
        code = run_cli(
            ["harris-rate", "--config", str(tmp_path / "nope.toml"),
             "--out", str(tmp_path / "o")]
        )
        assert code == 2

    def test_console_invocation(self, tmp_path):
        cfg = write(tmp_path, "h.toml", HARRIS_TOML)
        proc = subprocess.run(
            [sys.executable, "-m", "kfpcert.cli", "harris-rate",
             "--config", cfg, "--out", str(tmp_path / "o")],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert (tmp_path / "o" / "report.json").exists()
