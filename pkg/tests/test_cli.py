import json
import subprocess
import sys

import pytest

from multistage import __version__
from multistage.cli import run_cli
from multistage.reporting import format_cell, read_csv, write_csv

SMOOTH = '{"family": "quadratic_cap", "params": {"curvature": 10.0}}'


def run(tmp_path, *argv):
    code = run_cli([*argv, "--out", str(tmp_path / "out")])
    return code, tmp_path / "out.report.json", tmp_path / "out.data.csv"


def test_simulate_writes_report_and_csv(tmp_path, capsys):
    code, rep, data = run(tmp_path, "simulate", "--problem", "mode", "--reps", "5")
    assert code == 0
    doc = json.loads(rep.read_text())
    assert doc["version"] == __version__ and doc["experiment"] == "simulate"
    assert doc["config"]["two_stage"]["problem"] == "mode"
    assert "out" not in doc["config"] and "jobs" not in doc["config"]
    header, rows = read_csv(data)
    assert len(rows) == 5 and "d2_hat" in header
    assert all(r[header.index("wall_ms")] == "nan" for r in rows)
    assert capsys.readouterr().out.startswith("simulate mode")


def test_outputs_are_byte_identical_across_jobs(tmp_path):
    outs = []
    for jobs in ("1", "2"):
        d = tmp_path / jobs
        code = run_cli(["rate", "--problem", "inverse_isotonic", "--reps", "100",
                        "--n-grid", "256,512,1024,2048", "--seed", "5", "--jobs", jobs,
                        "--out", str(d / "r")])
        assert code == 0
        outs.append(((d / "r.report.json").read_bytes(), (d / "r.data.csv").read_bytes()))
    assert outs[0] == outs[1]


def test_seed_changes_results(tmp_path):
    run_cli(["simulate", "--reps", "3", "--seed", "1", "--out", str(tmp_path / "a")])
    run_cli(["simulate", "--reps", "3", "--seed", "2", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a.data.csv").read_bytes() != (tmp_path / "b.data.csv").read_bytes()


def test_default_prefix(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run_cli(["limits", "--draws", "20", "--seed", "3"]) == 0
    assert (tmp_path / "limits_abs_seed3.report.json").exists()
    assert run_cli(["simulate", "--reps", "2"]) == 0
    assert (tmp_path / "simulate_changepoint_seed0.data.csv").exists()


def test_gate_violation_exits_2(tmp_path, capsys):
    code, rep, _ = run(tmp_path, "simulate", "--xi", "0.25", "--gamma", "0.6", "--reps", "2")
    assert code == 2 and not rep.exists()
    assert "γ < 1−2ξ" in capsys.readouterr().err


def test_degenerate_limit_exits_2(tmp_path, capsys):
    code, *_ = run(tmp_path, "dist-check", "--problem", "mode", "--set", f"model.curve={SMOOTH}")
    assert code == 2
    assert "no limit law" in capsys.readouterr().err


@pytest.mark.parametrize("argv,needle", [
    (["simulate", "--set", "model.colour=1"], "model.colour: unknown field"),
    (["simulate", "--set", "two_stage.seed=3"], "two_stage.seed"),
    (["simulate", "--set", "bogus=1"], "bogus"),
    (["simulate", "--p", "1.5"], "two_stage.p"),
    (["simulate", "--seed", "-1"], "seed"),
    (["limits", "--reps", "3"], "reps"),
    (["allocate", "--p-grid", "0.1,0.2,1.2,0.5,0.6"], "p_grid[2]"),
    (["simulate", "--n", "many"], "invalid int"),
    (["frobnicate"], "invalid choice"),
])
def test_bad_input_exits_1(tmp_path, capsys, argv, needle):
    code = run_cli([*argv, "--out", str(tmp_path / "x")]) if argv[0] != "frobnicate" else run_cli(argv)
    assert code == 1
    assert needle in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"experiment": "simulate", "seed": 9, "reps": 4,
                                "two_stage": {"problem": "classification", "gamma": 0.2}}))
    code, rep, data = run(tmp_path, "simulate", "--config", str(conf), "--gamma", "0.1")
    assert code == 0
    doc = json.loads(rep.read_text())
    assert doc["config"]["seed"] == 9 and doc["config"]["reps"] == 4
    assert doc["config"]["two_stage"]["gamma"] == 0.1
    assert doc["config"]["two_stage"]["problem"] == "classification"
    assert doc["config"]["model"]["kind"] == "binary_monotone"
    assert len(read_csv(data)[1]) == 4


def test_limits_writes_one_row_per_draw(tmp_path):
    code, rep, data = run(tmp_path, "limits", "--drift", "quadratic", "--draws", "10000")
    assert code == 0
    header, rows = read_csv(data)
    assert header == ["index", "value"] and len(rows) == 10000
    doc = json.loads(rep.read_text())
    assert doc["config"]["grid"] == {"step": 0.001, "range": 8.0}
    assert doc["result"]["sd"] == pytest.approx(0.5134, abs=0.02)


def test_csv_round_trips_at_full_precision(tmp_path):
    values = [0.1, 1 / 3, 2.0**-40, 123456789.123456789, -7e-300, float("nan"), float("inf")]
    write_csv(tmp_path / "v.csv", ["x"], [{"x": v} for v in values])
    _, rows = read_csv(tmp_path / "v.csv")
    back = [float(r[0]) for r in rows]
    for a, b in zip(values, back):
        assert (a == b) or (a != a and b != b)
    assert [format_cell(v) for v in (True, None, 3)] == ["true", "", "3"]


def test_report_json_is_strict(tmp_path):
    code, rep, _ = run(tmp_path, "simulate", "--reps", "2", "--problem", "changepoint")
    text = rep.read_text()
    assert code == 0 and "NaN" not in text and text.endswith("\n")
    json.loads(text)


def test_console_script_version():
    out = subprocess.run([sys.executable, "-m", "multistage.cli", "--version"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == __version__
