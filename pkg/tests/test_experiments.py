import json
import os
from pathlib import Path

import numpy as np
import pytest
import yaml

from spikefield import SUB, ModelParams
from spikefield.cli import main
from spikefield.errors import ConfigError, UnknownScenario
from spikefield.experiments import (OUT_ENV, SCENARIOS, ExperimentConfig,
                                    config_from_dict, load_config, run_scenario)


def _write(tmp_path, name, raw):
    p = tmp_path / name
    with open(p, "w") as f:
        yaml.safe_dump(raw, f)
    return str(p)


def _result_files(out):
    return sorted(f for f in os.listdir(out) if f != "manifest.json")


def _read_bytes(out):
    return {f: (Path(out) / f).read_bytes() for f in _result_files(out)}


def test_config_error_aggregates_all_problems():
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"scenario": "simulate", "benchmark": "nope",
                          "bogus_key": 1, "horizon": -2.0, "format": "xml"})
    msg = str(exc.value)
    for field in ("bogus_key", "benchmark", "seed", "horizon", "format"):
        assert field in msg
    assert len(exc.value.problems) >= 5


def test_params_and_benchmark_are_exclusive():
    base = {"scenario": "simulate", "seed": 1}
    with pytest.raises(ConfigError, match="params"):
        config_from_dict({**base, "benchmark": "sub",
                          "params": {"mu": 1, "gamma": 0.2, "kappa": 2, "rho": 1}})
    with pytest.raises(ConfigError):
        config_from_dict(base)   # neither given
    cfg = config_from_dict({**base, "benchmark": "sub"})
    assert cfg.params == SUB


def test_seed_validation():
    base = {"scenario": "simulate", "benchmark": "sub"}
    for bad in (None, -1, 2**64, "x", 1.5):
        with pytest.raises(ConfigError, match="seed"):
            config_from_dict({**base, "seed": bad} if bad is not None else base)


def test_eval_times_and_numeric_validation():
    base = {"scenario": "simulate", "benchmark": "sub", "seed": 3}
    with pytest.raises(ConfigError, match="eval_times"):
        config_from_dict({**base, "eval_times": [2.0, 1.0]})
    with pytest.raises(ConfigError, match="eval_times"):
        config_from_dict({**base, "eval_times": [-1.0, 1.0]})
    for key, bad in (("horizon", 0), ("dt", -0.1), ("replicas", 0),
                     ("paths", 0), ("n", 0), ("workers", 0), ("init", -1.0)):
        with pytest.raises(ConfigError, match=key):
            config_from_dict({**base, key: bad})


def test_out_resolution_order(tmp_path, monkeypatch):
    base = {"scenario": "simulate", "benchmark": "sub", "seed": 4}
    monkeypatch.delenv(OUT_ENV, raising=False)
    assert config_from_dict(dict(base)).out == "runs"
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env_out"))
    assert config_from_dict(dict(base)).out == str(tmp_path / "env_out")
    assert config_from_dict({**base, "out": "explicit"}).out == "explicit"


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.yaml"))
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(str(bad))
    notmap = tmp_path / "list.yaml"
    notmap.write_text("- a\n- b\n")
    with pytest.raises(ConfigError):
        load_config(str(notmap))


def test_load_config_default_scenario_and_overrides(tmp_path):
    p = _write(tmp_path, "c.yaml", {"benchmark": "sub", "seed": 5})
    cfg = load_config(p, default_scenario="observables", seed=9, workers=3,
                      out=str(tmp_path / "o"), fmt="jsonl")
    assert cfg.scenario == "observables"
    assert cfg.seed == 9 and cfg.workers == 3 and cfg.format == "jsonl"
    # explicit scenario key wins over the subcommand default
    p2 = _write(tmp_path, "c2.yaml",
                {"scenario": "generator", "benchmark": "sub", "seed": 5})
    assert load_config(p2, default_scenario="observables").scenario == "generator"


def test_unknown_scenario_rejected(tmp_path):
    # the config layer is syntactic; dispatch owns the registry check
    cfg = ExperimentConfig(scenario="nope", params=SUB, seed=1, out="x")
    with pytest.raises(UnknownScenario):
        run_scenario(cfg)
    p = _write(tmp_path, "c.yaml",
               {"scenario": "nope", "benchmark": "sub", "seed": 1})
    assert main(["simulate", "--config", p]) == 2


def test_run_is_deterministic_and_worker_invariant(tmp_path):
    raw = {"scenario": "simulate", "benchmark": "crit", "seed": 21, "n": 15,
           "horizon": 1.5, "replicas": 6, "eval_times": [0.5, 1.0, 1.5]}
    outs = []
    for tag, workers in (("a", 1), ("b", 1), ("c", 3)):
        out = str(tmp_path / tag)
        p = _write(tmp_path, f"{tag}.yaml", {**raw, "out": out})
        man = run_scenario(load_config(p, workers=workers))
        assert man.all_checks_passed
        outs.append(out)
    ref = _read_bytes(outs[0])
    assert ref == _read_bytes(outs[1])
    assert ref == _read_bytes(outs[2])
    # manifests agree on everything except wall clock and the out path
    mans = []
    for out in outs:
        with open(Path(out) / "manifest.json") as f:
            m = json.load(f)
        m.pop("elapsed_seconds")
        m["config"].pop("out")
        m["config"].pop("workers")
        mans.append(m)
    assert mans[0] == mans[1] == mans[2]


def test_manifest_is_complete(tmp_path):
    out = str(tmp_path / "gen")
    p = _write(tmp_path, "gen.yaml",
               {"scenario": "generator", "benchmark": "crit", "seed": 22,
                "replicas": 400, "out": out, "options": {"dt": 0.01}})
    man = run_scenario(load_config(p))
    with open(Path(out) / "manifest.json") as f:
        m = json.load(f)
    assert m["artifact"] == "spikefield"
    assert m["scenario"] == "generator"
    assert m["seed"] == 22
    assert set(m["files"]) == set(_result_files(out))
    assert set(man.checks) == set(m["checks"])


def test_simulate_eval_times_must_fit_horizon(tmp_path):
    p = _write(tmp_path, "c.yaml",
               {"scenario": "simulate", "benchmark": "sub", "seed": 23, "n": 10,
                "horizon": 1.0, "replicas": 2, "eval_times": [0.5, 2.0],
                "out": str(tmp_path / "o")})
    with pytest.raises(ConfigError, match="horizon"):
        run_scenario(load_config(p))


def test_jsonl_event_logs(tmp_path):
    out = str(tmp_path / "ev")
    p = _write(tmp_path, "c.yaml",
               {"scenario": "simulate", "benchmark": "crit", "seed": 24, "n": 12,
                "horizon": 1.0, "replicas": 3, "eval_times": [1.0],
                "format": "jsonl", "out": out})
    man = run_scenario(load_config(p))
    logs = [f for f in man.files if f.startswith("events_r")]
    assert len(logs) == 3
    with open(Path(out) / logs[0]) as f:
        first = json.loads(f.readline())
    assert set(first) == {"k", "t", "firer", "excited"}
    assert first["k"] == 0 and len(first["excited"]) == SUB.kappa


def test_phase_sweep_check_detects_mislabels(tmp_path):
    # an absurd survival threshold forces a label/dynamics mismatch
    out = str(tmp_path / "ps")
    p = _write(tmp_path, "c.yaml",
               {"scenario": "phase-sweep", "benchmark": "sub", "seed": 25,
                "horizon": 6.0, "dt": 0.02, "paths": 300, "out": out,
                "options": {"gammas": [0.2], "survival_threshold": 1e-9}})
    man = run_scenario(load_config(p))
    assert man.checks["labels_match_dynamics"] is False
    assert not man.all_checks_passed


def test_persistence_expect_option_validation(tmp_path):
    p = _write(tmp_path, "c.yaml",
               {"scenario": "persistence", "benchmark": "sub", "seed": 26,
                "n_list": [20, 40], "horizon": 30.0, "replicas": 25,
                "out": str(tmp_path / "o"), "options": {"expect": "bogus"}})
    with pytest.raises(ConfigError, match="expect"):
        run_scenario(load_config(p))


def test_generator_needs_enough_replicas(tmp_path):
    p = _write(tmp_path, "c.yaml",
               {"scenario": "generator", "benchmark": "crit", "seed": 27,
                "replicas": 10, "out": str(tmp_path / "o")})
    with pytest.raises(ConfigError, match="replicas"):
        run_scenario(load_config(p))


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml")]) == 2
    bad = _write(tmp_path, "bad.yaml", {"scenario": "simulate", "seed": "x"})
    assert main(["simulate", "--config", bad]) == 2
    good = _write(tmp_path, "good.yaml",
                  {"scenario": "generator", "benchmark": "crit", "seed": 28,
                   "replicas": 400, "options": {"dt": 0.01}})
    assert main(["simulate", "--config", good, "--out", str(tmp_path / "ok")]) == 0
    txt = capsys.readouterr().out
    assert "manifest.json" in txt and "ok" in txt
    failing = _write(tmp_path, "fail.yaml",
                     {"scenario": "phase-sweep", "benchmark": "sub", "seed": 29,
                      "horizon": 6.0, "dt": 0.02, "paths": 300,
                      "options": {"gammas": [0.2], "survival_threshold": 1e-9}})
    assert main(["sweep", "--config", failing, "--out", str(tmp_path / "f")]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_cli_subcommand_supplies_default_scenario(tmp_path, capsys):
    raw = {"benchmark": "crit", "seed": 30, "replicas": 400,
           "options": {"dt": 0.01}}
    # generator config without a scenario key lands on the subcommand default,
    # which rejects generator-only options
    p = _write(tmp_path, "c.yaml", raw)
    code = main(["simulate", "--config", p, "--out", str(tmp_path / "o"),
                 "--seed", "31"])
    out = str(tmp_path / "o")
    assert code in (0, 1)
    with open(Path(out) / "manifest.json") as f:
        m = json.load(f)
    assert m["scenario"] == "simulate"
    assert m["seed"] == 31


def test_cli_validate_subset(tmp_path, capsys):
    out = str(tmp_path / "v")
    assert main(["validate", "--criteria", "1,10", "--out", out]) == 0
    txt = capsys.readouterr().out
    assert "criterion  1 PASS" in txt and "criterion 10 PASS" in txt
    with open(Path(out) / "validation_report.json") as f:
        rep = json.load(f)
    assert rep["passed"] is True
    assert [c["number"] for c in rep["criteria"]] == [1, 10]
    assert main(["validate", "--criteria", "1,bogus", "--out", out]) == 2
    assert main(["validate", "--criteria", "99", "--out", out]) == 2


def test_scenario_registry_is_stable():
    assert list(SCENARIOS) == ["simulate", "phase-sweep", "bound-check",
                               "observables", "chaos-rate", "persistence",
                               "oracle-crosscheck", "no-reset", "generator"]
