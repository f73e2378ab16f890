"""Iteration-stepped simulation of expert serving policies over a trace.

For every batch and every MoE layer: route the batch's tokens to get the
ground-truth loads, build the policy's plan (for the serverless policy: the
prediction made ``d`` layers earlier, greedy scaling, warm-aware placement),
then evaluate the plan's layer time on the ground truth.
"""

from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .baselines import (ABLATION, EPLB, MOELESS, ORACLE_BALANCE, POLICIES, STATIC,
                        eplb_plan, oracle_balance_time, static_plan)
from .cost_model import ClusterSpec, LoadVector, ModelSpec, layer_forward_time, serverful_cost
from .errors import ExpertScaleError, PlacementInfeasibleError
from .placer import ReplicaRegistry, place_experts, round_robin_place, update_registry
from .predictor import (HISTORICAL, NOISY, PredictorProfile, apply_layer_aware_finetuning,
                        at_distance, default_accuracies, historical_estimate, measure_accuracy,
                        predict)
from .scaler import ScalerConfig, no_scaling, scale_experts
from .workload import PopularityProfile, batch_requests, materialize_loads

BOOTSTRAP = -1
# how layers l < d are planned at the start of an iteration
BOOTSTRAP_PREDICTED = "predicted"  # the distance-d predictor, run at iteration start
BOOTSTRAP_HISTORICAL = "historical"  # previous iteration's actuals for the layer
BOOTSTRAP_MODES = (BOOTSTRAP_PREDICTED, BOOTSTRAP_HISTORICAL)


@dataclass(frozen=True)
class WorkloadConfig:
    zipf_exponent: float = 1.2
    decode_zipf_exponent: float | None = None
    drift_period: int = 0
    shared_permutation: bool = False
    max_iterations: int = 0  # 0 = whole trace


@dataclass(frozen=True)
class SimConfig:
    cluster: ClusterSpec = field(default_factory=ClusterSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    policy: str = MOELESS
    predictor: PredictorProfile | None = None
    scaler: ScalerConfig = field(default_factory=ScalerConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    finetune: bool = True
    keep_alive_iters: int = 1
    cold_start_ms: float = 0.0
    eplb_period_iters: int = 600
    eplb_replica_budget: int | None = None  # default: one per GPU
    plan_refresh_iters: int = 1
    bootstrap: str = BOOTSTRAP_PREDICTED
    audit: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; expected one of {POLICIES}")
        if self.predictor is None:
            object.__setattr__(self, "predictor", PredictorProfile(
                per_layer_accuracy=default_accuracies(self.model.num_layers)))
        if len(self.predictor.per_layer_accuracy) != self.model.num_layers:
            raise ValueError("predictor needs one accuracy per layer")
        if self.predictor.distance >= self.model.num_layers:
            raise ValueError("prediction distance must be smaller than num_layers")
        if self.keep_alive_iters < 0 or self.cold_start_ms < 0:
            raise ValueError("keep_alive_iters and cold_start_ms must be >= 0")
        if self.eplb_period_iters < 1 or self.plan_refresh_iters < 1:
            raise ValueError("eplb_period_iters and plan_refresh_iters must be >= 1")
        if self.eplb_replica_budget is not None and self.eplb_replica_budget < 0:
            raise ValueError("eplb_replica_budget must be >= 0")
        if self.bootstrap not in BOOTSTRAP_MODES:
            raise ValueError(f"unknown bootstrap {self.bootstrap!r}; expected one of {BOOTSTRAP_MODES}")

    @property
    def eplb_budget(self):
        if self.eplb_replica_budget is None:
            return self.cluster.gpu_count
        return self.eplb_replica_budget

    def effective_predictor(self):
        prof = self.predictor
        if self.finetune and prof.kind == NOISY:
            prof = apply_layer_aware_finetuning(prof)
        return at_distance(prof, prof.distance)


@dataclass(frozen=True)
class Sample:
    iteration: int
    layer: int
    forward_ms: float
    compute_ms: float
    comm_ms: float
    replicas: int
    warm: int
    cold: int
    cost: float
    plan_origin: int  # layer whose step produced the plan; -1 = bootstrap


SAMPLE_COLUMNS = ("iteration", "layer", "policy", "forward_ms", "replicas", "warm", "cold")


@dataclass
class MetricsReport:
    policy: str
    iterations: int
    layers: int
    samples: list
    total_latency_ms: float
    total_cost: float
    total_cost_serverful: float
    mean_forward_ms: float
    mean_replicas_per_layer: float
    per_layer_mean_replicas: list
    per_layer_accuracy: list
    warm_total: int
    cold_total: int
    fallback_predictions: int
    percentiles: dict
    lossy: bool = False

    def summary(self):
        d = asdict(self)
        d.pop("samples")
        return d

    def csv_rows(self):
        for s in self.samples:
            yield (s.iteration, s.layer, self.policy, repr(s.forward_ms), s.replicas, s.warm, s.cold)


def _percentiles(values):
    if not values:
        return {"p50": 0.0, "p95": 0.0, "p99": 0.0}
    arr = np.asarray(values)
    return {f"p{q}": float(np.percentile(arr, q)) for q in (50, 95, 99)}


def _popularity(profile, layer, batch):
    return profile.expert_weights(layer, batch.iteration, batch.phase)


class _Run:
    def __init__(self, config, batches, loads, profile):
        self.cfg = config
        self.batches = batches
        self.loads = loads
        self.profile = profile
        m = config.model
        self.L, self.E = m.num_layers, m.experts_per_layer
        self.pred = config.effective_predictor()
        self.registry = ReplicaRegistry(config.keep_alive_iters)
        window = max(self.pred.history_window, 1)
        self.history = [deque(maxlen=window) for _ in range(self.L)]
        self.eplb_history = [deque(maxlen=config.eplb_period_iters) for _ in range(self.L)]
        self.prev_iter_actual = [None] * self.L
        self.cached = [None] * self.L
        self.fallbacks = 0
        self.acc_sum = [0.0] * self.L
        self.acc_n = [0] * self.L

    # plan builders return (plan, placement, predicted or None, origin)

    def _serverless(self, i, layer, actual):
        cfg, d = self.cfg, self.pred.distance
        early = layer < d
        if early and cfg.bootstrap == BOOTSTRAP_HISTORICAL:
            prev = self.prev_iter_actual[layer]
            hist = [prev] if prev is not None else []
            loads, fell_back = historical_estimate(hist, actual.total, self.E, 1)
            predicted = LoadVector(layer, loads)
            origin = BOOTSTRAP
        else:
            predicted = predict(actual, list(self.history[layer]), self.pred, cfg.seed,
                                iteration=i, popularity=_popularity(self.profile, layer, self.batches[i]))
            fell_back = self.pred.kind == HISTORICAL and not self.history[layer]
            origin = BOOTSTRAP if early else layer - d
        plan = scale_experts(predicted, cfg.model, cfg.scaler)
        placement = place_experts(plan, cfg.cluster, self.registry, i, cfg.model.expert_mem)
        return plan, placement, predicted, origin, fell_back

    def _ablation(self, i, layer, actual):
        loads, fell_back = historical_estimate(list(self.history[layer]), actual.total, self.E,
                                               self.pred.history_window)
        predicted = LoadVector(layer, loads)
        plan = no_scaling(predicted, self.cfg.model)
        placement = round_robin_place(plan, self.cfg.cluster, self.cfg.model.expert_mem)
        return plan, placement, predicted, layer, fell_back

    def _static(self, i, layer, actual):
        if self.cached[layer] is None:
            self.cached[layer] = static_plan(self.cfg.model, self.cfg.cluster, layer=layer)
        plan, placement = self.cached[layer]
        return plan, placement, None, BOOTSTRAP, False

    def _eplb(self, i, layer, actual):
        cfg = self.cfg
        hist = list(self.eplb_history[layer])
        out = eplb_plan(hist, cfg.eplb_period_iters, cfg.eplb_budget, cfg.model, cfg.cluster, i,
                        previous=self.cached[layer], layer=layer)
        self.cached[layer] = out
        return out[0], out[1], None, BOOTSTRAP, False

    def _build(self, i, layer, actual):
        policy = self.cfg.policy
        if policy == MOELESS:
            return self._serverless(i, layer, actual)
        if policy == ABLATION:
            return self._ablation(i, layer, actual)
        if policy == STATIC:
            return self._static(i, layer, actual)
        return self._eplb(i, layer, actual)

    def _audit(self, i, layer, actual, plan, placement):
        # plans of history-driven policies must not move when the truth changes
        cfg = self.cfg
        if cfg.policy == MOELESS and self.pred.kind != HISTORICAL:
            if layer >= self.pred.distance or cfg.bootstrap == BOOTSTRAP_PREDICTED:
                return
        fake = LoadVector(layer, tuple(reversed(actual.loads)))
        saved = (dict(self.registry.entries), list(self.cached))
        p2, pl2, *_ = self._build(i, layer, fake)
        self.registry.entries, self.cached = saved
        if p2.replica_counts != plan.replica_counts or pl2.assignments != placement.assignments:
            raise AssertionError(f"plan for iteration {i} layer {layer} depends on ground truth")

    def step(self, i, layer):
        cfg = self.cfg
        actual = LoadVector(layer, self.loads[i, layer])
        if cfg.policy == ORACLE_BALANCE:
            slots = self.E + max(cfg.model.max_extra_replicas, cfg.eplb_budget)
            m = oracle_balance_time(actual, cfg.cluster, slots, cfg.model.expert_mem)
            return Sample(i, layer, m.forward_ms, m.compute_ms, m.comm_ms, m.replica_count,
                          0, 0, m.cost, BOOTSTRAP)
        reuse = (cfg.policy in (MOELESS, ABLATION) and self.cached[layer] is not None
                 and i % cfg.plan_refresh_iters != 0)
        if reuse:
            plan, placement, predicted, origin = self.cached[layer]
            fell_back = False
        else:
            plan, placement, predicted, origin, fell_back = self._build(i, layer, actual)
            if cfg.audit:
                self._audit(i, layer, actual, plan, placement)
            if cfg.policy in (MOELESS, ABLATION):
                self.cached[layer] = (plan, placement, predicted, origin)
        self.fallbacks += int(fell_back)
        metrics = layer_forward_time(plan, placement, actual, cfg.cluster, cfg.model.expert_mem)
        forward = metrics.forward_ms
        if self.pred.distance == 0 and placement.cold > 0 and not reuse:
            forward += cfg.cold_start_ms
        if cfg.policy == MOELESS and not reuse:
            update_registry(self.registry, placement, i)
        if predicted is not None:
            self.acc_sum[layer] += measure_accuracy(predicted, actual)
            self.acc_n[layer] += 1
        self.history[layer].append(actual)
        self.eplb_history[layer].append(actual)
        self.prev_iter_actual[layer] = actual
        warm = placement.warm if not reuse else plan.total_replicas
        cold = placement.cold if not reuse else 0
        return Sample(i, layer, forward, metrics.compute_ms, metrics.comm_ms,
                      plan.total_replicas, warm, cold, metrics.cost, origin)

    def execute(self):
        samples = []
        n_iter = self.loads.shape[0]
        for i in range(n_iter):
            for layer in range(self.L):
                try:
                    samples.append(self.step(i, layer))
                except PlacementInfeasibleError as exc:
                    exc.iteration, exc.layer = i, layer
                    raise
        return self._report(samples, n_iter)

    def _report(self, samples, n_iter):
        cfg = self.cfg
        fwd = [s.forward_ms for s in samples]
        total = math.fsum(fwd)
        per_layer = []
        for layer in range(self.L):
            reps = [s.replicas for s in samples if s.layer == layer]
            per_layer.append(sum(reps) / len(reps) if reps else 0.0)
        acc = [self.acc_sum[l] / self.acc_n[l] if self.acc_n[l] else None for l in range(self.L)]
        return MetricsReport(
            policy=cfg.policy,
            iterations=n_iter,
            layers=self.L,
            samples=samples,
            total_latency_ms=total,
            total_cost=math.fsum(s.cost for s in samples),
            total_cost_serverful=serverful_cost(total, cfg.model, cfg.cluster),
            mean_forward_ms=total / len(samples) if samples else 0.0,
            mean_replicas_per_layer=(sum(s.replicas for s in samples) / len(samples)) if samples else 0.0,
            per_layer_mean_replicas=per_layer,
            per_layer_accuracy=acc,
            warm_total=sum(s.warm for s in samples),
            cold_total=sum(s.cold for s in samples),
            fallback_predictions=self.fallbacks,
            percentiles=_percentiles(fwd),
            lossy=cfg.policy == ORACLE_BALANCE,
        )


def prepare(config, trace):
    """Batches, ground-truth loads and popularity profile for a trace."""
    batches = batch_requests(trace)
    if config.workload.max_iterations:
        batches = batches[:config.workload.max_iterations]
    if not batches:
        raise ExpertScaleError("trace produced no batches")
    w = config.workload
    profile = PopularityProfile(config.model.num_layers, config.model.experts_per_layer,
                                w.zipf_exponent, w.drift_period, config.seed,
                                w.shared_permutation, w.decode_zipf_exponent)
    loads = materialize_loads(batches, profile, config.model, config.seed)
    return batches, loads, profile


def run(config, trace, prepared=None):
    """Simulate ``config`` on a list of requests and return a MetricsReport."""
    batches, loads, profile = prepared if prepared is not None else prepare(config, trace)
    return _Run(config, batches, loads, profile).execute()


def _workload_key(config):
    return (config.seed, config.workload, config.model.num_layers,
            config.model.experts_per_layer, config.model.top_k)


def run_comparison(configs, trace):
    """Paired runs on one trace and one routing seed.

    ``trace`` may be a single request list or one list per config; in the
    latter case all lists must be identical.
    """
    if not configs:
        raise ValueError("no configs to compare")
    if trace and isinstance(trace[0], list):
        if len(trace) != len(configs) or any(t != trace[0] for t in trace):
            raise ValueError("comparison requires the same trace for every config")
        trace = trace[0]
    keys = {_workload_key(c) for c in configs}
    if len(keys) != 1:
        raise ValueError("comparison requires a shared seed, workload and model shape")
    prepared = prepare(configs[0], trace)
    reports = [run(c, trace, prepared) for c in configs]
    return comparison_summary(reports)


def comparison_summary(reports):
    out = {"policies": [], "cdf": {}, "mean_latency_ratios": {}}
    for r in reports:
        out["policies"].append(r.summary())
        fwd = np.sort([s.forward_ms for s in r.samples])
        qs = np.linspace(0.0, 1.0, 101)
        out["cdf"][r.policy] = [float(x) for x in np.quantile(fwd, qs)]
    for a in reports:
        for b in reports:
            if a is not b and b.mean_forward_ms > 0:
                out["mean_latency_ratios"][f"{a.policy}/{b.policy}"] = a.mean_forward_ms / b.mean_forward_ms
    out["reports"] = reports
    return out


SWEEP_GRIDS = {
    "cv": [0.2, 0.4, 0.6, 0.8, 1.0],
    "distance": [1, 2, 3, 4, 5],
}


def with_parameter(config, parameter, value):
    if parameter == "cv":
        return replace(config, scaler=replace(config.scaler, cv_threshold=float(value)))
    if parameter == "distance":
        return replace(config, predictor=replace(config.predictor, distance=int(value)))
    raise ValueError(f"unknown sweep parameter {parameter!r}; expected 'cv' or 'distance'")


def _sweep_point(args):
    config, trace, prepared = args
    return run(config, trace, prepared)


def sweep(config, parameter, trace, values=None, jobs=1):
    """One run per grid value with a shared seed; rows come back in grid order."""
    values = SWEEP_GRIDS[parameter] if values is None else list(values)
    if not values:
        raise ValueError("empty sweep grid")
    configs = [with_parameter(config, parameter, v) for v in values]
    prepared = prepare(configs[0], trace)
    tasks = [(c, trace, prepared) for c in configs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_sweep_point, tasks))
    else:
        reports = [_sweep_point(t) for t in tasks]
    rows = []
    for v, r in zip(values, reports):
        rows.append({
            "parameter": parameter,
            "value": v,
            "mean_forward_ms": r.mean_forward_ms,
            "mean_replicas_per_layer": r.mean_replicas_per_layer,
            "total_cost": r.total_cost,
            "p99_forward_ms": r.percentiles["p99"],
        })
    return rows
