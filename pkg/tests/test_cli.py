"""End-to-end command line coverage, run in-process through main()."""

import json
import os

import pytest

from clcsim.cli import main, scenario_names


def test_list_scenarios_prints_library(capsys):
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    for name in scenario_names():
        assert name in out
    assert "synchronous-baseline" in out


def test_validate_config_echoes_roundtrippable_yaml(capsys, tmp_path):
    assert main(["validate-config", "micro-random"]) == 0
    text = capsys.readouterr().out
    path = tmp_path / "echo.yaml"
    path.write_text(text)
    assert main(["validate-config", str(path)]) == 0
    assert capsys.readouterr().out == text


def test_validate_config_applies_overrides(capsys):
    assert main(["validate-config", "micro-random", "--set", "seed=777"]) == 0
    assert "seed: 777" in capsys.readouterr().out


def test_validate_config_rejects_bad_input(capsys):
    assert main(["validate-config", "no-such-scenario"]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["validate-config", "micro-random", "--set", "nope=1"]) == 2
    assert "unknown config path" in capsys.readouterr().err
    assert main(["validate-config", "micro-random", "--set", "beta"]) == 2
    assert "--set needs key=value" in capsys.readouterr().err
    assert main(["validate-config", "micro-random",
                 "--set", "checks.must_pass=[no-such-check]"]) == 2
    assert "unknown check" in capsys.readouterr().err


def test_run_writes_artifacts_under_out_root(capsys, tmp_path):
    code = main(["run", "micro-random", "--out", str(tmp_path),
                 "--no-figures"])
    out = capsys.readouterr().out
    assert code == 0
    outdir = tmp_path / "run-micro-random-s10000"
    assert outdir.is_dir()
    assert str(outdir) in out
    names = set(os.listdir(outdir))
    assert {"report.json", "report.txt", "trace.ndjson"} <= names
    assert not any(n.endswith(".png") for n in names)
    with open(outdir / "report.json") as f:
        assert json.load(f)["scenario"] == "micro-random"


def test_run_honors_env_root_and_seed_flag(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("CLCSIM_OUT", str(tmp_path))
    assert main(["run", "micro-random", "--seed", "10003",
                 "--no-figures"]) == 0
    capsys.readouterr()
    assert (tmp_path / "run-micro-random-s10003").is_dir()


def test_replay_verifies_byte_identical_rerun(capsys, tmp_path):
    assert main(["run", "micro-random", "--out", str(tmp_path),
                 "--no-figures"]) == 0
    capsys.readouterr()
    trace_path = tmp_path / "run-micro-random-s10000" / "trace.ndjson"
    assert main(["replay", str(trace_path)]) == 0
    assert "rerun: byte-identical" in capsys.readouterr().out


def test_replay_flags_divergence(capsys, tmp_path):
    assert main(["run", "micro-random", "--out", str(tmp_path),
                 "--no-figures"]) == 0
    capsys.readouterr()
    trace_path = tmp_path / "run-micro-random-s10000" / "trace.ndjson"
    text = trace_path.read_text()
    assert '"seed":10000' in text
    trace_path.write_text(text.replace('"seed":10000', '"seed":10001', 1))
    assert main(["replay", str(trace_path)]) == 1
    assert "rerun: DIVERGED" in capsys.readouterr().out


def test_battery_verb_writes_summary(capsys, tmp_path):
    code = main(["battery", "micro-random", "--seeds", "3",
                 "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "scenario micro-random: 3 seeds" in out
    with open(tmp_path / "battery-micro-random" / "battery.json") as f:
        payload = json.load(f)
    assert payload["verdict"]["must_pass_ok"] is True
    assert payload["result"]["seeds"] == 3


def test_battery_rejects_mining_kind(capsys):
    assert main(["battery", "mining-statistics", "--seeds", "2"]) == 2
    assert "battery applies to simulation scenarios" in capsys.readouterr().err


def test_mining_stats_run_kind(capsys, tmp_path):
    code = main(["run", "mining-statistics", "--out", str(tmp_path),
                 "--no-figures",
                 "--set", "mining_stats.slots=20000",
                 "--set", "mining_stats.typicality_seeds=5",
                 "--set", "mining_stats.typicality_slots=600",
                 "--set", "mining_stats.taus=[150, 300]"])
    out = capsys.readouterr().out
    assert code == 0
    assert "mean_solo" in out
    outdir = tmp_path / "run-mining-statistics-s424242"
    if not outdir.is_dir():
        candidates = [p for p in tmp_path.iterdir()
                      if p.name.startswith("run-mining-statistics")]
        assert len(candidates) == 1
        outdir = candidates[0]
    names = set(os.listdir(outdir))
    assert {"report.json", "typicality.csv"} <= names
