import csv
import hashlib
import json

import pytest

from expertscale import __version__
from expertscale.cli import (CONFIG_KEYS, SWEEP_COLUMNS, bundled_trace_path, default_config, load_config, main,
                             oracle_check, sim_config, sweep_values, validate_config)
from expertscale.errors import ConfigError, GuardError
from expertscale.simulator import SAMPLE_COLUMNS
from expertscale.workload import parse_trace

SUMMARY_KEYS = {
    "policy", "iterations", "layers", "total_latency_ms", "total_cost", "total_cost_serverful",
    "mean_forward_ms", "mean_replicas_per_layer", "per_layer_mean_replicas", "per_layer_accuracy",
    "warm_total", "cold_total", "fallback_predictions", "percentiles", "lossy",
}
MANIFEST_KEYS = {"tool", "version", "command", "seed", "config", "config_digest", "trace_digest", "outputs"}


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def small_cfg(tmp_path):
    cfg = default_config()
    cfg.update(max_iterations=30, num_layers=3, prediction_distance_layers=1)
    path = tmp_path / "small.json"
    path.write_text(json.dumps(cfg))
    return path


# gen-trace

def test_gen_trace_line_count_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.trace", tmp_path / "b.trace"
    assert main(["gen-trace", "--count", "100", "--rate", "5", "--seed", "1", "-o", str(a)]) == 0
    assert main(["gen-trace", "--count", "100", "--rate", "5", "--seed", "1", "-o", str(b)]) == 0
    assert len(a.read_text().splitlines()) == 100
    assert sha(a) == sha(b)
    assert len(parse_trace(a)) == 100
    assert "wrote 100 requests" in capsys.readouterr().out


def test_gen_trace_zero_rate_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen-trace", "--count", "10", "--rate", "0", "-o", str(tmp_path / "x")])
    assert exc.value.code != 0
    assert "--rate" in capsys.readouterr().err


def test_gen_trace_unwritable_path(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["gen-trace", "--count", "5", "--rate", "1", "-o", str(blocker / "t.trace")]) != 0
    err = capsys.readouterr().err
    assert err.startswith("expertscale: error:") and err.count("\n") == 1


# config

def test_default_config_file_matches_code():
    assert load_config(None) == default_config()
    assert set(default_config()) == set(CONFIG_KEYS)


def test_validate_names_bad_key():
    with pytest.raises(ConfigError, match="cv_threshold"):
        validate_config({"cv_threshold": -1})
    with pytest.raises(ConfigError, match="bogus"):
        validate_config({"bogus": 1})
    with pytest.raises(ConfigError, match="per_layer_accuracy"):
        validate_config({"num_layers": 2, "per_layer_accuracy": [0.5]})
    with pytest.raises(ConfigError, match="top_k"):
        validate_config({"experts_per_layer": 2, "top_k": 3})


def test_sim_config_maps_units():
    cfg = validate_config({"alpha_ms_per_token": 0.5, "gpu_count": 2, "cv_threshold": 0.4})
    sc = sim_config(cfg)
    assert sc.cluster.alpha == 0.5 and sc.cluster.gpu_count == 2 and sc.scaler.cv_threshold == 0.4


# simulate

def test_simulate_default_config_writes_three_files(out_dir):
    assert main(["simulate", "--out-dir", str(out_dir)]) == 0
    assert sorted(p.name for p in out_dir.iterdir()) == ["manifest.json", "samples.csv", "summary.json"]


def test_simulate_schemas(small_cfg, out_dir):
    assert main(["simulate", "--config", str(small_cfg), "--out-dir", str(out_dir)]) == 0
    summary = json.loads((out_dir / "summary.json").read_text())
    assert set(summary) == SUMMARY_KEYS
    assert set(summary["percentiles"]) == {"p50", "p95", "p99"}
    with open(out_dir / "samples.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == SAMPLE_COLUMNS
    assert len(rows) - 1 == summary["iterations"] * summary["layers"] == 90
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert set(manifest) == MANIFEST_KEYS
    assert manifest["tool"] == "expertscale" and manifest["version"] == __version__
    assert manifest["command"] == "simulate"
    assert manifest["trace_digest"] == sha(bundled_trace_path())
    for name in ("summary.json", "samples.csv"):
        assert manifest["outputs"][name]["sha256"] == sha(out_dir / name)


def test_simulate_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"cv_threshold": -1}))
    assert main(["simulate", "--config", str(bad), "--out-dir", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "cv_threshold" in err and err.count("\n") == 1


def test_simulate_infeasible_names_location(tmp_path, capsys):
    cfg = default_config()
    cfg.update(gpu_count=1, gpu_mem_capacity_mb=330.0, max_iterations=3)
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(cfg))
    assert main(["simulate", "--config", str(path), "--out-dir", str(tmp_path / "o")]) == 1
    assert "iteration 0, layer 0" in capsys.readouterr().err


def test_simulate_moeless_beats_static_on_skewed_trace(small_cfg, tmp_path):
    means = {}
    for policy in ("static", "moeless"):
        out = tmp_path / policy
        assert main(["simulate", "--config", str(small_cfg), "--policy", policy, "--out-dir", str(out)]) == 0
        means[policy] = json.loads((out / "summary.json").read_text())["mean_forward_ms"]
    assert means["moeless"] < means["static"]


def test_output_dir_from_environment(small_cfg, tmp_path, monkeypatch):
    root = tmp_path / "env-root"
    monkeypatch.setenv("EXPERTSCALE_OUTPUT_DIR", str(root))
    assert main(["simulate", "--config", str(small_cfg)]) == 0
    (run_dir,) = root.iterdir()
    assert run_dir.name.startswith("simulate-moeless-")
    assert (run_dir / "summary.json").exists()


def test_custom_trace_file(tmp_path, out_dir):
    trace = tmp_path / "t.trace"
    assert main(["gen-trace", "--count", "20", "--rate", "10", "-o", str(trace)]) == 0
    assert main(["simulate", "--trace", str(trace), "--policy", "static", "--out-dir", str(out_dir)]) == 0
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["trace_digest"] == sha(trace)


# compare

def test_compare_schema(small_cfg, out_dir):
    assert main(["compare", "--config", str(small_cfg), "--policies", "moeless,static,oracle_balance",
                 "--out-dir", str(out_dir)]) == 0
    data = json.loads((out_dir / "comparison.json").read_text())
    assert set(data) == {"policies", "cdf", "mean_latency_ratios"}
    assert [p["policy"] for p in data["policies"]] == ["moeless", "static", "oracle_balance"]
    assert all(set(p) == SUMMARY_KEYS for p in data["policies"])
    with open(out_dir / "samples.csv") as fh:
        assert len(list(csv.reader(fh))) == 1 + 3 * 90


def test_compare_unknown_policy(small_cfg, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["compare", "--config", str(small_cfg), "--policies", "moeless,magic", "--out-dir", str(tmp_path)])
    assert exc.value.code == 2


# sweep

def test_sweep_values():
    assert sweep_values("cv", 0.2, 1.0, 0.2) == [0.2, 0.4, 0.6, 0.8, 1.0]
    assert sweep_values("distance", 1, 5) == [1, 2, 3, 4, 5]
    assert sweep_values("cv") == [0.2, 0.4, 0.6, 0.8, 1.0]


@pytest.mark.parametrize("flags", [
    ["--param", "cv", "--from", "0.2", "--to", "1.0", "--step", "0.2"],
    ["--param", "distance", "--from", "1", "--to", "5"],
])
def test_sweep_rows(flags, tmp_path, out_dir):
    cfg = default_config()
    cfg.update(max_iterations=10, num_layers=6)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert main(["sweep", "--config", str(path), *flags, "--out-dir", str(out_dir)]) == 0
    with open(out_dir / "sweep.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == SWEEP_COLUMNS and len(rows) == 6
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["parameter"] == flags[1] and len(manifest["values"]) == 5


def test_sweep_bad_bounds(tmp_path):
    with pytest.raises(SystemExit):
        main(["sweep", "--param", "cv", "--from", "1.0", "--to", "0.2", "--out-dir", str(tmp_path)])


# oracle-check

def test_oracle_check_dominance_and_report():
    rep = oracle_check(instances=30, seed=3)
    assert rep["dominance_violations"] == 0 and rep["ratio_min"] >= 1.0
    assert {"ratio_p50", "ratio_p95", "ratio_max", "fraction_within_tolerance"} <= set(rep)
    assert len(rep["records"]) == 30


def test_oracle_check_uniform_zero_budget_is_exact():
    rep = oracle_check(instances=30, seed=1, uniform=True, max_extra=0)
    assert rep["ratio_min"] == rep["ratio_max"] == 1.0


def test_oracle_check_guard():
    with pytest.raises(GuardError):
        oracle_check(instances=1, max_experts=9)
    with pytest.raises(GuardError):
        oracle_check(instances=1, min_experts=5, max_experts=4)


def test_oracle_check_command(out_dir, capsys):
    assert main(["oracle-check", "--instances", "10", "--out-dir", str(out_dir)]) == 0
    data = json.loads((out_dir / "oracle_check.json").read_text())
    assert "ratio_p95" in data and data["instances"] == 10
    assert "p95" in capsys.readouterr().out


def test_oracle_check_command_guard(out_dir):
    assert main(["oracle-check", "--instances", "1", "--max-gpus", "9", "--out-dir", str(out_dir)]) == 1


# report

def test_report_formats(small_cfg, out_dir, capsys):
    assert main(["simulate", "--config", str(small_cfg), "--out-dir", str(out_dir)]) == 0
    capsys.readouterr()
    assert main(["report", str(out_dir)]) == 0
    text = capsys.readouterr().out
    assert "policy" in text and "moeless" in text
    assert main(["report", str(out_dir / "summary.json"), "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["policy"] == "moeless"


def test_report_missing(tmp_path):
    assert main(["report", str(tmp_path)]) == 1
