"""Reference policies and the exhaustive optimum for tiny instances."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

from . import kernels
from .cost_model import LayerMetrics, LoadVector, ScalingPlan
from .errors import GuardError, PlacementInfeasibleError
from .placer import Placement, cold_place, round_robin_place
from .scaler import budget_scaling

MOELESS = "moeless"
STATIC = "static"
EPLB = "eplb"
ORACLE_BALANCE = "oracle_balance"
ABLATION = "ablation"  # historical prediction, no scaling, static placement
POLICIES = (MOELESS, STATIC, EPLB, ORACLE_BALANCE, ABLATION)

BRUTE_FORCE_MAX_EXPERTS = 4
BRUTE_FORCE_MAX_GPUS = 3
BRUTE_FORCE_MAX_EXTRA = 4


def static_plan(model, cluster, layer=0):
    """One replica per expert, expert ``e`` on GPU ``e mod G``."""
    E = model.experts_per_layer
    plan = ScalingPlan.even(layer, [0] * E, [1] * E, model.expert_mem)
    return plan, round_robin_place(plan, cluster, model.expert_mem)


def eplb_plan(history, period, replica_budget, model, cluster, iteration, previous=None, layer=0):
    """Periodic history-driven replication with a fixed replica budget.

    Between refresh boundaries (``iteration % period != 0``) ``previous`` is
    returned unchanged. On refresh, the budget goes greedily to the experts
    with the largest mean historical per-replica load, and replicas are
    placed by join-the-shortest-queue with no warm reuse.
    """
    if period < 1:
        raise ValueError("period must be >= 1")
    if replica_budget < 0:
        raise ValueError("replica_budget must be >= 0")
    if previous is not None and iteration % period != 0:
        return previous
    E = model.experts_per_layer
    if history:
        summed = [sum(int(v.loads[e]) for v in history) for e in range(E)]
    else:
        summed = [1] * E
    if all(s == 0 for s in summed):
        summed = [1] * E
    plan = budget_scaling(summed, replica_budget, model, layer=layer)
    return plan, cold_place(plan, cluster, model.expert_mem)


def oracle_balance_time(actual, cluster, replica_slots=None, expert_mem=0.0):
    """Perfectly balanced layer time (lossy: ignores the router's choices).

    The layer's tokens are split evenly over ``replica_slots`` parallel
    replicas (default: one per GPU) and evenly over the GPUs for all-to-all.
    """
    loads = actual.loads if isinstance(actual, LoadVector) else tuple(actual)
    total = float(sum(loads))
    slots = cluster.gpu_count if replica_slots is None else replica_slots
    if slots < 1:
        raise ValueError("replica_slots must be >= 1")
    compute = cluster.alpha * total / slots
    comm = cluster.beta * total / cluster.gpu_count
    busy = compute + 2.0 * comm
    mem = len(loads) * expert_mem
    return LayerMetrics(
        compute_ms=compute,
        comm_ms=comm,
        forward_ms=busy + cluster.t_misc,
        replica_count=len(loads),
        mem_mb=mem,
        cost=busy * mem + cluster.t_misc * cluster.m_misc,
        gpu_comm_ms=(comm,) * cluster.gpu_count,
    )


def _count_vectors(n_experts, max_extra):
    for counts in itertools.product(range(1, max_extra + 2), repeat=n_experts):
        if sum(counts) - n_experts <= max_extra:
            yield counts


def brute_force_optimal(predicted, model, cluster, max_extra_replicas):
    """Minimum single-layer forward time over every replica-count vector with
    at most ``max_extra_replicas`` extra replicas and every memory-feasible
    replica-to-GPU assignment.

    Ties prefer fewer replicas, then the lexicographically smaller count
    vector and assignment. Returns ``(plan, placement, forward_ms)``.
    """
    loads = predicted.loads if isinstance(predicted, LoadVector) else tuple(predicted)
    layer = predicted.layer if isinstance(predicted, LoadVector) else 0
    E, G = len(loads), cluster.gpu_count
    if E > BRUTE_FORCE_MAX_EXPERTS or G > BRUTE_FORCE_MAX_GPUS or max_extra_replicas > BRUTE_FORCE_MAX_EXTRA:
        raise GuardError(
            f"brute force limited to E<={BRUTE_FORCE_MAX_EXPERTS}, G<={BRUTE_FORCE_MAX_GPUS}, "
            f"extra<={BRUTE_FORCE_MAX_EXTRA}; got E={E}, G={G}, extra={max_extra_replicas}")
    if max_extra_replicas < 0:
        raise ValueError("max_extra_replicas must be >= 0")
    alpha, beta, t_misc = Fraction(cluster.alpha), Fraction(cluster.beta), Fraction(cluster.t_misc)
    slot_cap = int(cluster.gpu_mem_capacity // model.expert_mem)
    total = sum(Fraction(w) for w in loads)
    best = None  # (forward, n_replicas, counts, assignment)
    for counts in _count_vectors(E, max_extra_replicas):
        n = sum(counts)
        if n > slot_cap * G:
            continue
        per_replica = [Fraction(w) / c for w, c in zip(loads, counts)]
        compute = alpha * max(per_replica)
        bound = compute + 2 * beta * max(total / G, max(per_replica)) + t_misc
        if best is not None and (bound, n, counts) > best[:3]:
            continue
        shares = [per_replica[e] for e in range(E) for _ in range(counts[e])]
        scale = math.lcm(*(s.denominator for s in shares))
        sizes = [int(s * scale) for s in shares]
        span, assign = kernels.min_makespan(np.asarray(sizes, dtype=np.int64), G, slot_cap)
        if assign is None:
            continue
        forward = compute + 2 * beta * Fraction(span, scale) + t_misc
        key = (forward, n, counts, tuple(assign))
        if best is None or key < best:
            best = key
    if best is None:
        raise PlacementInfeasibleError("no memory-feasible plan", layer=layer)
    forward, _, counts, assign = best
    plan = ScalingPlan.even(layer, loads, counts, model.expert_mem)
    keys = plan.replica_keys()
    assignments = {k: g for k, g in zip(keys, assign)}
    mem = [0.0] * G
    load = [Fraction(0)] * G
    for (e, r, s), g in zip(plan.shares, assign):
        mem[g] += model.expert_mem
        load[g] += s
    placement = Placement(layer, G, assignments, tuple(mem), tuple(load), 0, len(keys))
    return plan, placement, float(forward)
