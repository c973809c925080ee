from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from ablate.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_run_writes_archive_and_applies_overrides(tmp_path, capsys):
    assert main(["run", "--config", str(CONFIGS / "benchmark_sim.json"), "--seed", "9", "--budget", "10", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "seed=9" in out and "budget=10" in out
    report = json.loads(next((tmp_path / "runs").glob("*/report.json")).read_text())
    assert report["seed"] == 9 and report["executed"] == 10


def test_out_dir_defaults_to_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("ABLATE_OUT_DIR", str(tmp_path / "env-out"))
    assert main(["run", "--config", str(CONFIGS / "benchmark_sim.json"), "--budget", "2"]) == 0
    assert list((tmp_path / "env-out" / "runs").glob("*/events.log"))


def test_missing_config_is_usage_error(capsys):
    assert main(["run", "--config", "/no/such/file.json"]) == 2
    assert "not found" in capsys.readouterr().err


def test_bad_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["run"])
    assert exc.value.code == 2


def test_simulate_writes_csv(tmp_path, capsys):
    args = ["simulate", "--config", str(CONFIGS / "benchmark_sim.json"), "--trials", "5", "--out", str(tmp_path), "--format", "csv"]
    assert main(args) == 0
    rows = list(csv.DictReader((tmp_path / "simulate.csv").open()))
    assert [r["policy"] for r in rows] == ["ucb", "random", "heuristic"]
    assert capsys.readouterr().out == (tmp_path / "simulate.csv").read_text()
    assert main(args[:4] + ["0"]) == 2


def test_validate(tmp_path, capsys):
    assert main(["validate", "--config", str(CONFIGS / "cpa_like.json")]) == 0
    data = json.loads((CONFIGS / "benchmark_sim.json").read_text())
    data["space"]["components"].append(data["space"]["components"][0])
    data["bandit"]["lambda"] = -1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    assert main(["validate", "--config", str(bad)]) == 1
    out = capsys.readouterr().out
    assert "duplicate component id" in out and "bandit.lambda" in out


def test_report_and_replay(tmp_path, capsys):
    main(["run", "--config", str(CONFIGS / "benchmark_sim.json"), "--budget", "6", "--out", str(tmp_path)])
    run_dir = next((tmp_path / "runs").iterdir())
    capsys.readouterr()
    assert main(["report", str(run_dir), "--format", "json"]) == 0
    assert capsys.readouterr().out == (run_dir / "report.json").read_text()
    assert main(["replay", str(run_dir), "--out", str(tmp_path / "replayed")]) == 0
    assert (tmp_path / "replayed" / "report.json").read_bytes() == (run_dir / "report.json").read_bytes()
    assert main(["replay", str(tmp_path / "missing")]) == 2
    (run_dir / "events.log").write_text((run_dir / "events.log").read_text().splitlines()[0] + "\n")
    assert main(["replay", str(run_dir)]) == 1
