import csv
import json
import subprocess
import sys

import pytest

from anytime_sched.cli import SIMULATE_COLUMNS, SWEEP_COLUMNS, main


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_simulate_writes_csv_and_manifest(tmp_path):
    out = tmp_path / "run.csv"
    assert main(["simulate", "--policy", "lcf", "--count", "60", "--reps", "2",
                 "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 2 and tuple(rows[0]) == SIMULATE_COLUMNS
    assert [r["seed"] for r in rows] == ["0", "1"]
    manifest = json.loads((tmp_path / "run.csv.json").read_text())
    assert manifest["params"]["policy"] == "lcf"
    assert manifest["columns"] == list(SIMULATE_COLUMNS)


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# overload\ndu = 0.05\npolicy = rr\ndrop-mode = mandatory\ncount = 40\n")
    out = tmp_path / "a.csv"
    assert main(["simulate", "--config", str(cfg), "--policy", "edf", "--out", str(out)]) == 0
    (row,) = read_csv(out)
    assert row["policy"] == "edf" and row["du"] == "0.050000"
    assert row["drop_mode"] == "mandatory" and row["jobs"] == "40"


def test_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("colour = blue\n")
    assert main(["simulate", "--config", str(cfg)]) != 0
    assert "unknown config key" in capsys.readouterr().err


def test_sweep_rows_follow_plan_order(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--axis", "k", "--values", "2,4", "--policy", "planner-exp,rr",
                 "--count", "30", "--reps", "2", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert tuple(rows[0]) == SWEEP_COLUMNS
    assert [(r["value"], r["policy"]) for r in rows] == [
        ("2", "planner-exp"), ("2", "rr"), ("4", "planner-exp"), ("4", "rr")]
    assert all(r["reps"] == "2" for r in rows)


@pytest.mark.parametrize("argv", [
    ["simulate", "--trace", "/nonexistent/trace"],
    ["simulate", "--reps", "0"],
    ["simulate", "--du", "0.001", "--dl", "0.01"],
    ["sweep", "--policy", "fifo"],
    ["sweep", "--axis", "k", "--values", "two"],
])
def test_errors_exit_nonzero(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path / "x.csv")]) != 0
    assert not (tmp_path / "x.csv").exists()


def test_gen_trace_then_simulate(tmp_path):
    trace = tmp_path / "t.trace"
    assert main(["gen-trace", "--out", str(trace), "--records", "100", "--wcet",
                 "0.002,0.002,0.004"]) == 0
    assert trace.read_text().startswith("#stages=3 classes=10 wcet=0.002,0.002,0.004")
    out = tmp_path / "r.csv"
    assert main(["simulate", "--trace", str(trace), "--count", "50", "--out", str(out)]) == 0


def test_validate(capsys):
    assert main(["validate", "--instances", "50", "--epsilon", "0.2,0.5"]) == 0
    assert capsys.readouterr().out.strip().endswith("OK")


def test_profile(tmp_path, capsys):
    samples = tmp_path / "s.csv"
    samples.write_text("stage,seconds\n1,1\n1,1\n1,1\n1,3\n2,0.02\n2,0.02\n")
    assert main(["profile", "--samples", str(samples)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "stage,wcet"
    assert lines[1].startswith("1,2.78")
    assert main(["profile", "--samples", str(tmp_path / "missing")]) != 0


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "anytime_sched", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
