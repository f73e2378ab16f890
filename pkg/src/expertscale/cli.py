"""Command-line interface: trace generation, simulation, comparison, sweeps,
brute-force validation and report printing.

Configuration files are flat JSON objects whose keys carry their units
(``alpha_ms_per_token``, ``gpu_mem_capacity_mb`` ...). See ``CONFIG_KEYS`` and
the bundled ``data/default_config.json``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from dataclasses import dataclass, replace
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import (BRUTE_FORCE_MAX_EXPERTS, BRUTE_FORCE_MAX_EXTRA, BRUTE_FORCE_MAX_GPUS,
                        POLICIES, brute_force_optimal)
from .cost_model import ClusterSpec, LoadVector, ModelSpec, forward_time_exact
from .errors import ConfigError, ExpertScaleError, GuardError, PlacementInfeasibleError
from .placer import cold_place
from .predictor import KINDS, PredictorProfile, default_accuracies
from .scaler import ScalerConfig, scale_experts
from .simulator import (BOOTSTRAP_MODES, SAMPLE_COLUMNS, SWEEP_GRIDS, SimConfig, WorkloadConfig,
                        run, run_comparison, sweep)
from .workload import batch_requests, gen_synthetic_trace, parse_trace, write_trace, zipf_weights

OUTPUT_DIR_ENV = "EXPERTSCALE_OUTPUT_DIR"
DEFAULT_OUTPUT_ROOT = "expertscale-runs"
ORACLE_TOLERANCE = 1.5
SWEEP_COLUMNS = ("parameter", "value", "mean_forward_ms", "mean_replicas_per_layer",
                 "total_cost", "p99_forward_ms")


# --- configuration ---------------------------------------------------------

def _number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _integer(v):
    return isinstance(v, int) and not isinstance(v, bool)


@dataclass(frozen=True)
class _Key:
    default: object
    check: object  # callable(value) -> error message or None


def _int_at_least(lo):
    return lambda v: None if _integer(v) and v >= lo else f"expected an integer >= {lo}"


def _num_at_least(lo):
    return lambda v: None if _number(v) and v >= lo else f"expected a number >= {lo}"


def _positive(v):
    return None if _number(v) and v > 0 else "expected a number > 0"


def _unit(v):
    return None if _number(v) and 0 <= v <= 1 else "expected a number in [0, 1]"


def _boolean(v):
    return None if isinstance(v, bool) else "expected true or false"


def _one_of(options):
    return lambda v: None if v in options else f"expected one of {', '.join(map(str, options))}"


def _accuracies(v):
    if v is None:
        return None
    if not isinstance(v, list) or not all(_number(a) and 0 <= a <= 1 for a in v):
        return "expected null or a list of numbers in [0, 1]"
    return None


def _optional(check):
    return lambda v: None if v is None else check(v)


CONFIG_KEYS = {
    # cluster
    "gpu_count": _Key(4, _int_at_least(1)),
    "gpu_mem_capacity_mb": _Key(48000.0, _positive),
    "alpha_ms_per_token": _Key(0.01, _num_at_least(0)),
    "beta_ms_per_token": _Key(0.002, _num_at_least(0)),
    "t_misc_ms": _Key(0.5, _num_at_least(0)),
    "m_misc_mb": _Key(0.0, _num_at_least(0)),
    # model
    "num_layers": _Key(8, _int_at_least(1)),
    "experts_per_layer": _Key(16, _int_at_least(1)),
    "top_k": _Key(2, _int_at_least(1)),
    "expert_mem_mb": _Key(330.0, _positive),
    "layer_mem_cap_mb": _Key(16 * 330.0, _num_at_least(0)),
    # policy and planning
    "policy": _Key("moeless", _one_of(POLICIES)),
    "cv_threshold": _Key(0.2, _num_at_least(0)),
    "exclude_zero_load": _Key(False, _boolean),
    "predictor_kind": _Key("noisy", _one_of(KINDS)),
    "prediction_distance_layers": _Key(1, _int_at_least(0)),
    "per_layer_accuracy": _Key(None, _accuracies),
    "accuracy_threshold": _Key(0.8, _unit),
    "finetune": _Key(True, _boolean),
    "history_window_iters": _Key(20, _int_at_least(1)),
    "reassignment": _Key("uniform", _one_of(("uniform", "popularity"))),
    "calibrated_noise": _Key(True, _boolean),
    "bootstrap": _Key("predicted", _one_of(BOOTSTRAP_MODES)),
    "keep_alive_iters": _Key(1, _int_at_least(0)),
    "cold_start_ms": _Key(0.0, _num_at_least(0)),
    "plan_refresh_iters": _Key(1, _int_at_least(1)),
    "eplb_period_iters": _Key(600, _int_at_least(1)),
    "eplb_replica_budget": _Key(None, _optional(_int_at_least(0))),
    # workload
    "zipf_exponent": _Key(1.2, _num_at_least(0)),
    "decode_zipf_exponent": _Key(None, _optional(_num_at_least(0))),
    "drift_period_iters": _Key(0, _int_at_least(0)),
    "shared_permutation": _Key(False, _boolean),
    "max_iterations": _Key(500, _int_at_least(0)),
    "seed": _Key(0, _int_at_least(0)),
    "audit": _Key(False, _boolean),
}


def default_config():
    return {k: spec.default for k, spec in CONFIG_KEYS.items()}


def validate_config(raw):
    """Merge ``raw`` over the defaults and check every key; raises ConfigError."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    cfg = default_config()
    for key, value in raw.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(key, "unknown config key")
        problem = CONFIG_KEYS[key].check(value)
        if problem:
            raise ConfigError(key, f"{problem}, got {value!r}")
        cfg[key] = value
    if cfg["top_k"] > cfg["experts_per_layer"]:
        raise ConfigError("top_k", f"must not exceed experts_per_layer ({cfg['experts_per_layer']})")
    if cfg["prediction_distance_layers"] >= cfg["num_layers"]:
        raise ConfigError("prediction_distance_layers", f"must be smaller than num_layers ({cfg['num_layers']})")
    acc = cfg["per_layer_accuracy"]
    if acc is not None and len(acc) != cfg["num_layers"]:
        raise ConfigError("per_layer_accuracy", f"needs {cfg['num_layers']} entries, got {len(acc)}")
    return cfg


def load_config(path=None):
    if path is None:
        return validate_config({})
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"{path} is not valid JSON: {exc.msg} at line {exc.lineno}") from None
    return validate_config(raw)


def sim_config(cfg):
    """Build a SimConfig from a validated flat config."""
    cluster = ClusterSpec(cfg["gpu_count"], float(cfg["gpu_mem_capacity_mb"]), float(cfg["alpha_ms_per_token"]),
                          float(cfg["beta_ms_per_token"]), float(cfg["t_misc_ms"]), float(cfg["m_misc_mb"]))
    model = ModelSpec(cfg["num_layers"], cfg["experts_per_layer"], cfg["top_k"],
                      float(cfg["expert_mem_mb"]), float(cfg["layer_mem_cap_mb"]))
    acc = cfg["per_layer_accuracy"]
    predictor = PredictorProfile(
        kind=cfg["predictor_kind"],
        distance=cfg["prediction_distance_layers"],
        per_layer_accuracy=tuple(acc) if acc is not None else default_accuracies(model.num_layers),
        accuracy_threshold=float(cfg["accuracy_threshold"]),
        history_window=cfg["history_window_iters"],
        reassignment=cfg["reassignment"],
        calibrated=cfg["calibrated_noise"],
    )
    workload = WorkloadConfig(
        zipf_exponent=float(cfg["zipf_exponent"]),
        decode_zipf_exponent=None if cfg["decode_zipf_exponent"] is None else float(cfg["decode_zipf_exponent"]),
        drift_period=cfg["drift_period_iters"],
        shared_permutation=cfg["shared_permutation"],
        max_iterations=cfg["max_iterations"],
    )
    return SimConfig(
        cluster=cluster, model=model, policy=cfg["policy"], predictor=predictor,
        scaler=ScalerConfig(float(cfg["cv_threshold"]), cfg["exclude_zero_load"]),
        workload=workload, finetune=cfg["finetune"], keep_alive_iters=cfg["keep_alive_iters"],
        cold_start_ms=float(cfg["cold_start_ms"]), eplb_period_iters=cfg["eplb_period_iters"],
        eplb_replica_budget=cfg["eplb_replica_budget"], plan_refresh_iters=cfg["plan_refresh_iters"],
        bootstrap=cfg["bootstrap"], audit=cfg["audit"], seed=cfg["seed"],
    )


# --- files -----------------------------------------------------------------

def bundled_trace_path():
    return resources.files("expertscale") / "data" / "sample.trace"


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _digest(data):
    if isinstance(data, str):
        data = data.encode()
    return hashlib.sha256(data).hexdigest()


def _read_trace(path):
    path = bundled_trace_path() if path is None else Path(path)
    data = path.read_bytes()
    return parse_trace(path), _digest(data), str(path)


def _output_dir(args, label):
    if args.out_dir:
        out = Path(args.out_dir)
    else:
        out = Path(os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_ROOT) / label
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(out, name, text, written):
    path = out / name
    path.write_text(text)
    written[name] = _digest(text)


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _manifest(out, command, cfg, trace_digest, written, extra=None):
    body = {
        "tool": "expertscale",
        "version": __version__,
        "command": command,
        "seed": cfg["seed"],
        "config": cfg,
        "config_digest": _digest(_canonical(cfg)),
        "trace_digest": trace_digest,
        "outputs": {name: {"path": name, "sha256": d} for name, d in sorted(written.items())},
    }
    if extra:
        body.update(extra)
    (out / "manifest.json").write_text(_canonical(body))


def _apply_overrides(cfg, args):
    raw = dict(cfg)
    if getattr(args, "policy", None):
        raw["policy"] = args.policy
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    return validate_config(raw)


def _label(command, cfg, trace_digest, *parts):
    tag = _digest(_canonical(cfg) + trace_digest)[:12]
    return "-".join([command, *parts, tag])


# --- commands --------------------------------------------------------------

def cmd_gen_trace(args):
    if args.count < 1:
        raise _Usage("--count must be >= 1")
    if not args.rate > 0:
        raise _Usage("--rate must be > 0")
    reqs = gen_synthetic_trace(args.count, args.rate, args.prompt_median, args.prompt_sigma,
                               args.output_median, args.output_sigma, seed=args.seed)
    out = Path(args.output)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    write_trace(out, reqs)
    batches = batch_requests(reqs)
    print(f"wrote {len(reqs)} requests to {out}: span {reqs[-1].arrival_ms} ms, "
          f"mean prompt {np.mean([r.prompt_tokens for r in reqs]):.1f}, "
          f"mean output {np.mean([r.output_tokens for r in reqs]):.1f}, {len(batches)} iterations")
    return 0


def _report_files(report, out, written):
    _write(out, "summary.json", _canonical(report.summary()), written)
    _write(out, "samples.csv", _csv_text(SAMPLE_COLUMNS, report.csv_rows()), written)


def cmd_simulate(args):
    cfg = _apply_overrides(load_config(args.config), args)
    trace, trace_digest, _ = _read_trace(args.trace)
    config = sim_config(cfg)
    try:
        report = run(config, trace)
    except PlacementInfeasibleError as exc:
        raise ExpertScaleError(f"placement infeasible at iteration {exc.iteration}, layer {exc.layer}: {exc}") from None
    out = _output_dir(args, _label("simulate", cfg, trace_digest, cfg["policy"]))
    written = {}
    _report_files(report, out, written)
    _manifest(out, "simulate", cfg, trace_digest, written)
    print(f"{cfg['policy']}: mean forward {report.mean_forward_ms:.4f} ms, "
          f"p99 {report.percentiles['p99']:.4f} ms, mean replicas/layer {report.mean_replicas_per_layer:.2f}, "
          f"cost {report.total_cost:.6g} MB*ms -> {out}")
    return 0


def cmd_compare(args):
    cfg = _apply_overrides(load_config(args.config), args)
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    for p in policies:
        if p not in POLICIES:
            raise _Usage(f"unknown policy {p!r}; expected one of {', '.join(POLICIES)}")
    if not policies:
        raise _Usage("no policies given")
    trace, trace_digest, _ = _read_trace(args.trace)
    base = sim_config(cfg)
    result = run_comparison([replace(base, policy=p) for p in policies], trace)
    reports = result.pop("reports")
    out = _output_dir(args, _label("compare", cfg, trace_digest, *policies))
    written = {}
    _write(out, "comparison.json", _canonical(result), written)
    rows = [row for r in reports for row in r.csv_rows()]
    _write(out, "samples.csv", _csv_text(SAMPLE_COLUMNS, rows), written)
    _manifest(out, "compare", cfg, trace_digest, written, {"policies": policies})
    for r in reports:
        print(f"{r.policy:>15}: mean forward {r.mean_forward_ms:.4f} ms, cost {r.total_cost:.6g}, "
              f"serverful cost {r.total_cost_serverful:.6g}")
    print(f"-> {out}")
    return 0


def sweep_values(parameter, start=None, stop=None, step=None):
    """Inclusive grid; decimal arithmetic keeps 0.2 + 0.2 + ... exact."""
    if start is None and stop is None:
        return list(SWEEP_GRIDS[parameter])
    if start is None or stop is None:
        raise _Usage("--from and --to go together")
    try:
        lo, hi = Decimal(str(start)), Decimal(str(stop))
        inc = Decimal(str(step)) if step is not None else Decimal(1 if parameter == "distance" else "0.2")
    except InvalidOperation:
        raise _Usage("sweep bounds must be numbers") from None
    if inc <= 0:
        raise _Usage("--step must be > 0")
    if hi < lo:
        raise _Usage("--to must be >= --from")
    values = []
    v = lo
    while v <= hi:
        values.append(int(v) if parameter == "distance" else float(v))
        v += inc
    if parameter == "distance" and any(Decimal(x) != Decimal(str(x)) for x in values):
        raise _Usage("distance grid must be integral")
    return values


def cmd_sweep(args):
    cfg = _apply_overrides(load_config(args.config), args)
    trace, trace_digest, _ = _read_trace(args.trace)
    values = sweep_values(args.param, args.start, args.stop, args.step)
    rows = sweep(sim_config(cfg), args.param, trace, values, jobs=args.jobs)
    out = _output_dir(args, _label("sweep", cfg, trace_digest, args.param))
    written = {}
    _write(out, "sweep.csv", _csv_text(SWEEP_COLUMNS, ([r[c] for c in SWEEP_COLUMNS] for r in rows)), written)
    _manifest(out, "sweep", cfg, trace_digest, written, {"parameter": args.param, "values": values})
    for r in rows:
        print(f"{args.param}={r['value']}: mean forward {r['mean_forward_ms']:.4f} ms, "
              f"replicas/layer {r['mean_replicas_per_layer']:.3f}")
    print(f"-> {out}")
    return 0


def oracle_check(instances=200, seed=0, max_experts=BRUTE_FORCE_MAX_EXPERTS, max_gpus=BRUTE_FORCE_MAX_GPUS,
                 max_extra=BRUTE_FORCE_MAX_EXTRA, zipf_exponent=1.2, cv_threshold=0.2,
                 tolerance=ORACLE_TOLERANCE, cluster=None, uniform=False, min_experts=2):
    """Heuristic (scale + cold placement) vs exhaustive optimum on random small layers.

    Each instance draws E in [min_experts, max_experts], G in [1, max_gpus]
    and an extra-replica budget in [0, max_extra]; loads are 8..256 tokens
    routed by a randomly ranked Zipf profile. Ratios of heuristic to optimal
    forward time are computed exactly; ``records`` lists every instance.
    """
    if not 1 <= min_experts <= max_experts:
        raise GuardError("need 1 <= min_experts <= max_experts")
    if not (1 <= max_experts <= BRUTE_FORCE_MAX_EXPERTS and 1 <= max_gpus <= BRUTE_FORCE_MAX_GPUS
            and 0 <= max_extra <= BRUTE_FORCE_MAX_EXTRA):
        raise GuardError(f"guard sizes must satisfy 1<=experts<={BRUTE_FORCE_MAX_EXPERTS}, "
                         f"1<=gpus<={BRUTE_FORCE_MAX_GPUS}, 0<=extra<={BRUTE_FORCE_MAX_EXTRA}")
    if instances < 1:
        raise ValueError("instances must be >= 1")
    base = cluster or ClusterSpec()
    rng = np.random.default_rng(seed)
    ratios = []
    records = []
    for _ in range(instances):
        E = int(rng.integers(min_experts, max_experts + 1))
        G = int(rng.integers(1, max_gpus + 1))
        extra = int(rng.integers(0, max_extra + 1))
        tokens = int(rng.integers(8, 257))
        if uniform:
            loads = [tokens] * E
        else:
            w = np.asarray(zipf_weights(E, zipf_exponent))[rng.permutation(E)]
            loads = rng.multinomial(tokens, w / w.sum()).tolist()
        cl = replace(base, gpu_count=G, gpu_mem_capacity=float(E + extra))
        model = ModelSpec(num_layers=1, experts_per_layer=E, top_k=1, expert_mem=1.0, layer_mem_cap=float(extra))
        lv = LoadVector(0, loads)
        plan = scale_experts(lv, model, ScalerConfig(cv_threshold))
        placement = cold_place(plan, cl, model.expert_mem)
        heuristic = forward_time_exact(plan, placement, lv, cl)
        opt_plan, opt_placement, _ = brute_force_optimal(lv, model, cl, extra)
        optimum = forward_time_exact(opt_plan, opt_placement, lv, cl)
        ratio = heuristic / optimum if optimum > 0 else Fraction(1)
        ratios.append(ratio)
        records.append({"experts": E, "gpus": G, "max_extra": extra, "loads": loads,
                        "heuristic_counts": list(plan.replica_counts), "optimal_counts": list(opt_plan.replica_counts),
                        "heuristic_ms": float(heuristic), "optimal_ms": float(optimum), "ratio": float(ratio)})
    arr = np.asarray([float(r) for r in ratios])
    within = sum(1 for r in ratios if r <= Fraction(str(tolerance)))
    return {
        "instances": instances,
        "seed": seed,
        "tolerance": tolerance,
        "dominance_violations": sum(1 for r in ratios if r < 1),
        "fraction_within_tolerance": within / instances,
        "ratio_min": float(arr.min()),
        "ratio_p50": float(np.percentile(arr, 50)),
        "ratio_p95": float(np.percentile(arr, 95)),
        "ratio_max": float(arr.max()),
        "ratio_mean": float(arr.mean()),
        "records": records,
    }


def cmd_oracle_check(args):
    cfg = _apply_overrides(load_config(args.config), args)
    cl = sim_config(cfg).cluster
    report = oracle_check(args.instances, cfg["seed"], args.max_experts, args.max_gpus, args.max_extra,
                          args.zipf, float(cfg["cv_threshold"]), args.tolerance, cl, args.uniform,
                          args.min_experts)
    label = f"oracle-check-{_digest(_canonical([cfg, vars_for_label(args)]))[:12]}"
    out = _output_dir(args, label)
    written = {}
    _write(out, "oracle_check.json", _canonical(report), written)
    _manifest(out, "oracle-check", cfg, None, written, {"flags": vars_for_label(args)})
    print(f"{report['instances']} instances: ratio p50 {report['ratio_p50']:.4f}, p95 {report['ratio_p95']:.4f}, "
          f"max {report['ratio_max']:.4f}; dominance violations {report['dominance_violations']}; "
          f"{report['fraction_within_tolerance']:.1%} within {report['tolerance']} -> {out}")
    return 0 if report["dominance_violations"] == 0 else 1


def vars_for_label(args):
    return {k: getattr(args, k) for k in ("instances", "min_experts", "max_experts", "max_gpus", "max_extra", "zipf",
                                          "tolerance", "uniform")}


def cmd_report(args):
    src = Path(args.run)
    if src.is_dir():
        for name in ("summary.json", "comparison.json", "oracle_check.json"):
            if (src / name).exists():
                src = src / name
                break
        else:
            raise ExpertScaleError(f"{args.run}: no summary.json, comparison.json or oracle_check.json")
    data = json.loads(src.read_text())
    if args.format == "json":
        data.pop("records", None)
        print(json.dumps(data, sort_keys=True, indent=2))
        return 0
    if "policies" in data:
        summaries = data["policies"]
    elif "mean_forward_ms" in data:
        summaries = [data]
    else:
        for k in ("instances", "dominance_violations", "fraction_within_tolerance",
                  "ratio_p50", "ratio_p95", "ratio_max"):
            print(f"{k:>26}: {data[k]}")
        return 0
    head = f"{'policy':>15} {'mean_ms':>9} {'p50_ms':>9} {'p95_ms':>9} {'p99_ms':>9} {'replicas':>9} {'cost':>12} {'serverful':>12}"
    print(head)
    for s in summaries:
        p = s["percentiles"]
        print(f"{s['policy']:>15} {s['mean_forward_ms']:9.4f} {p['p50']:9.4f} {p['p95']:9.4f} {p['p99']:9.4f} "
              f"{s['mean_replicas_per_layer']:9.2f} {s['total_cost']:12.5g} {s['total_cost_serverful']:12.5g}")
    for k, v in sorted(data.get("mean_latency_ratios", {}).items()):
        print(f"{k}: {v:.4f}")
    return 0


# --- entry point -----------------------------------------------------------

class _Usage(Exception):
    pass


def build_parser():
    parser = argparse.ArgumentParser(
        prog="expertscale", description="Trace-driven simulator for serverless MoE expert scaling and placement.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-trace", help="write a synthetic request trace")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--rate", type=float, required=True, help="requests per second")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--prompt-median", type=float, default=256.0)
    g.add_argument("--prompt-sigma", type=float, default=0.8)
    g.add_argument("--output-median", type=float, default=64.0)
    g.add_argument("--output-sigma", type=float, default=0.8)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen_trace)

    def common(p, policy=True):
        p.add_argument("--config", help="flat JSON config (default: built-in defaults)")
        p.add_argument("--trace", help="trace file (default: bundled sample trace)")
        p.add_argument("--out-dir", help=f"output directory (default: ${OUTPUT_DIR_ENV} or ./{DEFAULT_OUTPUT_ROOT})")
        p.add_argument("--seed", type=int)
        if policy:
            p.add_argument("--policy", choices=POLICIES)

    s = sub.add_parser("simulate", help="run one policy over a trace")
    common(s)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", help="paired runs of several policies")
    common(c, policy=False)
    c.add_argument("--policies", default=",".join(POLICIES))
    c.set_defaults(func=cmd_compare)

    w = sub.add_parser("sweep", help="sensitivity sweep over cv threshold or prediction distance")
    common(w)
    w.add_argument("--param", choices=sorted(SWEEP_GRIDS), required=True)
    w.add_argument("--from", dest="start", type=float)
    w.add_argument("--to", dest="stop", type=float)
    w.add_argument("--step", type=float)
    w.add_argument("--jobs", type=int, default=1)
    w.set_defaults(func=cmd_sweep)

    o = sub.add_parser("oracle-check", help="heuristic vs exhaustive optimum on small layers")
    o.add_argument("--config")
    o.add_argument("--out-dir")
    o.add_argument("--seed", type=int)
    o.add_argument("--instances", type=int, default=200)
    o.add_argument("--min-experts", type=int, default=2)
    o.add_argument("--max-experts", type=int, default=BRUTE_FORCE_MAX_EXPERTS)
    o.add_argument("--max-gpus", type=int, default=BRUTE_FORCE_MAX_GPUS)
    o.add_argument("--max-extra", type=int, default=BRUTE_FORCE_MAX_EXTRA)
    o.add_argument("--zipf", type=float, default=1.2)
    o.add_argument("--tolerance", type=float, default=ORACLE_TOLERANCE)
    o.add_argument("--uniform", action="store_true", help="equal loads on every expert")
    o.set_defaults(func=cmd_oracle_check)

    r = sub.add_parser("report", help="print a run's summary")
    r.add_argument("run", help="run directory or JSON file")
    r.add_argument("--format", choices=("text", "json"), default="text")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _Usage as exc:
        parser.error(str(exc))
    except (ExpertScaleError, ValueError, OSError) as exc:
        print(f"expertscale: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
