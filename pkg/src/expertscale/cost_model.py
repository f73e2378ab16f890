"""Analytic latency and memory-time cost of one MoE layer.

A replica's compute time is linear in its token share, a GPU's one-way
all-to-all time is linear in the tokens it hosts, and a layer's forward time
is ``compute + 2 * comm + t_misc`` (scatter and gather are symmetric).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Sequence

import numpy as np

from .errors import DimensionError, PlacementInconsistencyError

# Mixtral-8x7B expert footprint
MIXTRAL_EXPERT_MB = 330.0


@dataclass(frozen=True)
class ClusterSpec:
    gpu_count: int = 4
    gpu_mem_capacity: float = 48_000.0  # MB, A6000
    alpha: float = 0.01  # ms per token of compute
    beta: float = 0.002  # ms per token of one-way all-to-all
    t_misc: float = 0.5  # ms of non-MoE work per layer
    m_misc: float = 0.0  # MB of non-MoE memory

    def __post_init__(self):
        if int(self.gpu_count) != self.gpu_count or self.gpu_count < 1:
            raise ValueError(f"gpu_count must be a positive integer, got {self.gpu_count}")
        if not self.gpu_mem_capacity > 0:
            raise ValueError("gpu_mem_capacity must be > 0")
        for name in ("alpha", "beta", "t_misc", "m_misc"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class ModelSpec:
    num_layers: int = 8
    experts_per_layer: int = 16
    top_k: int = 2
    expert_mem: float = MIXTRAL_EXPERT_MB
    layer_mem_cap: float = 16 * MIXTRAL_EXPERT_MB  # MB for replicas beyond one per expert

    def __post_init__(self):
        if self.num_layers < 1 or self.experts_per_layer < 1:
            raise ValueError("num_layers and experts_per_layer must be >= 1")
        if not 1 <= self.top_k <= self.experts_per_layer:
            raise ValueError(f"top_k must lie in [1, {self.experts_per_layer}], got {self.top_k}")
        if not self.expert_mem > 0:
            raise ValueError("expert_mem must be > 0")
        if self.layer_mem_cap < 0:
            raise ValueError("layer_mem_cap must be >= 0")

    @property
    def max_extra_replicas(self) -> int:
        return int(self.layer_mem_cap // self.expert_mem)


@dataclass(frozen=True)
class LoadVector:
    """Token count per expert for one layer in one iteration."""

    layer: int
    loads: tuple

    def __post_init__(self):
        object.__setattr__(self, "loads", tuple(int(x) for x in self.loads))
        if any(x < 0 for x in self.loads):
            raise ValueError("loads must be non-negative")

    def __len__(self):
        return len(self.loads)

    @property
    def total(self) -> int:
        return sum(self.loads)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.loads, dtype=np.int64)


@dataclass(frozen=True)
class ScalingPlan:
    """Replica counts per expert and the (expert, ordinal, share) triples."""

    layer: int
    replica_counts: tuple
    shares: tuple
    alloc_mem: float = 0.0

    @classmethod
    def even(cls, layer, loads, replica_counts, expert_mem):
        counts = tuple(int(c) for c in replica_counts)
        shares = []
        for e, (w, r) in enumerate(zip(loads, counts)):
            piece = Fraction(w) / r
            shares.extend((e, j, piece) for j in range(r))
        alloc = (sum(counts) - len(counts)) * expert_mem
        return cls(layer, counts, tuple(shares), alloc)

    @property
    def num_experts(self) -> int:
        return len(self.replica_counts)

    @property
    def total_replicas(self) -> int:
        return sum(self.replica_counts)

    def replica_keys(self):
        return [(e, r) for e, r, _ in self.shares]

    def expert_loads(self):
        out = [Fraction(0)] * self.num_experts
        for e, _, s in self.shares:
            out[e] += s
        return out


@dataclass(frozen=True)
class LayerMetrics:
    compute_ms: float
    comm_ms: float
    forward_ms: float
    replica_count: int
    mem_mb: float
    cost: float
    gpu_comm_ms: tuple = field(default=(), repr=False)


def replica_time(load_share, alpha):
    if load_share < 0:
        raise ValueError("load_share must be >= 0")
    return alpha * float(load_share)


def _check_placement(keys, placement):
    assignments = placement.assignments
    placed = set(assignments)
    wanted = set(keys)
    if len(wanted) != len(keys):
        raise PlacementInconsistencyError("plan lists a replica more than once")
    missing = wanted - placed
    if missing:
        raise PlacementInconsistencyError(f"unplaced replicas: {sorted(missing)}")
    extra = placed - wanted
    if extra:
        raise PlacementInconsistencyError(f"placement holds replicas not in plan: {sorted(extra)}")
    for key, g in assignments.items():
        if not 0 <= g < placement.gpu_count:
            raise PlacementInconsistencyError(f"replica {key} placed on unknown GPU {g}")


def _gpu_token_sums(shares, placement):
    sums = [0.0] * placement.gpu_count
    for e, r, s in shares:
        sums[placement.assignments[(e, r)]] += float(s)
    return sums


def gpu_comm_times(plan, placement, beta):
    """One-way all-to-all time of every GPU for this layer."""
    _check_placement(plan.replica_keys(), placement)
    return np.asarray([beta * s for s in _gpu_token_sums(plan.shares, placement)])


def layer_forward_time(plan, placement, actual, cluster, expert_mem=0.0):
    """Evaluate a plan made from predicted loads against the realized loads.

    Each expert's actual tokens are split evenly over its planned replicas.
    """
    loads = actual.loads if isinstance(actual, LoadVector) else tuple(actual)
    if len(loads) != plan.num_experts:
        raise DimensionError(f"actual has {len(loads)} experts, plan has {plan.num_experts}")
    if isinstance(actual, LoadVector) and actual.layer != plan.layer:
        raise DimensionError(f"actual is for layer {actual.layer}, plan for layer {plan.layer}")
    if getattr(placement, "layer", plan.layer) != plan.layer:
        raise DimensionError("plan and placement describe different layers")
    keys = plan.replica_keys()
    _check_placement(keys, placement)
    per_replica = [loads[e] / plan.replica_counts[e] for e in range(plan.num_experts)]
    actual_shares = [(e, r, per_replica[e]) for e, r in keys]
    compute = cluster.alpha * max(per_replica, default=0.0)
    gpu_comm = tuple(cluster.beta * s for s in _gpu_token_sums(actual_shares, placement))
    comm = max(gpu_comm, default=0.0)
    busy = compute + 2.0 * comm
    mem = plan.total_replicas * expert_mem
    return LayerMetrics(
        compute_ms=compute,
        comm_ms=comm,
        forward_ms=busy + cluster.t_misc,
        replica_count=plan.total_replicas,
        mem_mb=mem,
        cost=busy * mem + cluster.t_misc * cluster.m_misc,
        gpu_comm_ms=gpu_comm,
    )


def serverful_cost(total_latency_ms, model, cluster):
    """Memory-time cost when every expert of every layer stays resident."""
    resident = model.experts_per_layer * model.num_layers * model.expert_mem
    return (resident + cluster.m_misc) * total_latency_ms


def _exact(values):
    out = []
    for v in values:
        out.append(v if isinstance(v, Rational) else Fraction(v))
    return out


def _moments(values):
    vals = _exact(values)
    n = len(vals)
    total = sum(vals, Fraction(0))
    sumsq = sum((v * v for v in vals), Fraction(0))
    return n, total, sumsq


def coefficient_of_variation(values: Sequence) -> float:
    """Population standard deviation over mean; 0 for an all-zero vector."""
    if len(values) == 0:
        raise ValueError("coefficient_of_variation of an empty sequence")
    n, total, sumsq = _moments(values)
    if total == 0:
        return 0.0
    var = sumsq / n - (total / n) ** 2
    return math.sqrt(var) / (total / n)


def cv_exceeds(values, threshold) -> bool:
    """Exact test of ``CV(values) > threshold`` with no square roots."""
    if len(values) == 0:
        raise ValueError("cv_exceeds of an empty sequence")
    n, total, sumsq = _moments(values)
    if total == 0:
        return False
    v = Fraction(str(threshold)) if isinstance(threshold, float) else Fraction(threshold)
    # CV > V  <=>  n*sumsq - total^2 > V^2 * total^2
    return n * sumsq - total * total > v * v * total * total


def forward_time_exact(plan, placement, loads, cluster):
    """``layer_forward_time(...).forward_ms`` in exact rational arithmetic."""
    loads = loads.loads if isinstance(loads, LoadVector) else tuple(loads)
    _check_placement(plan.replica_keys(), placement)
    per_replica = [Fraction(loads[e]) / plan.replica_counts[e] for e in range(plan.num_experts)]
    sums = [Fraction(0)] * placement.gpu_count
    for e, r in plan.replica_keys():
        sums[placement.assignments[(e, r)]] += per_replica[e]
    return (Fraction(cluster.alpha) * max(per_replica, default=Fraction(0))
            + 2 * Fraction(cluster.beta) * max(sums, default=Fraction(0))
            + Fraction(cluster.t_misc))
