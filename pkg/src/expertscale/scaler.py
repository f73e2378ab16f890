"""Greedy straggler splitting under a per-layer replica memory budget."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from fractions import Fraction

from .cost_model import LoadVector, ScalingPlan, coefficient_of_variation, cv_exceeds


@dataclass(frozen=True)
class ScalerConfig:
    cv_threshold: float = 0.2
    # leave zero-load experts' shares out of the CV test
    exclude_zero_load: bool = False

    def __post_init__(self):
        if self.cv_threshold < 0:
            raise ValueError("cv_threshold must be >= 0")


def _threshold(v):
    return Fraction(str(v)) if isinstance(v, float) else Fraction(v)


# Integer loads below this bound give float shares w/r whose order and ties
# match the exact rationals, so the heap can run on floats.
_FLOAT_SAFE_LOAD = 1 << 26
_FLOAT_SAFE_SPLITS = 1024


class _ShareStats:
    """Running count, sum and sum of squares of the per-replica shares.

    The CV test runs in floating point and falls back to exact rationals
    when the float margin is too thin to trust.
    """

    def __init__(self, loads, counts, exclude_zero):
        self.loads = loads
        self.counts = counts
        self.exclude_zero = exclude_zero
        self.n = 0
        self.total = 0.0
        self.sumsq = 0.0
        for w, r in zip(loads, counts):
            self.add(w, r)

    def add(self, w, r):
        if self.exclude_zero and w == 0:
            return
        self.n += r
        self.total += float(w)
        self.sumsq += float(w) * float(w) / r

    def remove(self, w, r):
        if self.exclude_zero and w == 0:
            return
        self.n -= r
        self.total -= float(w)
        self.sumsq -= float(w) * float(w) / r

    def exceeds(self, v):
        if self.n == 0 or self.total == 0:
            return False
        t2 = self.total * self.total
        lhs = self.n * self.sumsq - t2
        rhs = float(v) * float(v) * t2
        if abs(lhs - rhs) > 1e-9 * (self.n * self.sumsq + t2):
            return lhs > rhs
        return self._exact(v)

    def _exact(self, v):
        n, total, sumsq = 0, Fraction(0), Fraction(0)
        for w, r in zip(self.loads, self.counts):
            if self.exclude_zero and w == 0:
                continue
            n += r
            total += w
            sumsq += Fraction(w) * w / r
        if total == 0:
            return False
        t2 = total * total
        return n * sumsq - t2 > v * v * t2


def _share_key(w, r, exact):
    return -(Fraction(w) / r) if exact else -(w / r)


def _exact_keys(loads, splits):
    if splits >= _FLOAT_SAFE_SPLITS:
        return True
    return not all(isinstance(w, int) and 0 <= w < _FLOAT_SAFE_LOAD for w in loads)


def _integral(loads):
    out = []
    for w in loads:
        if isinstance(w, Fraction) and w.denominator == 1:
            w = int(w)
        out.append(w)
    return out


def scale_experts(predicted, model, config, trace=None):
    """Return the replica plan for one layer.

    Starting from one replica per expert, repeatedly give one more replica to
    the expert with the largest per-replica share (ties: lowest expert index)
    while the CV of all shares exceeds the threshold and another replica
    still fits in ``model.layer_mem_cap``. Decisions are exact.

    If ``trace`` is a list, the replica counts after every split are appended.
    """
    loads = predicted.loads if isinstance(predicted, LoadVector) else tuple(predicted)
    layer = predicted.layer if isinstance(predicted, LoadVector) else 0
    if len(loads) == 0:
        raise ValueError("cannot scale an empty load vector")
    loads = _integral(loads)
    if any(w < 0 for w in loads):
        raise ValueError("loads must be non-negative")
    counts = [1] * len(loads)
    extra = 0
    v = _threshold(config.cv_threshold)
    exact = _exact_keys(loads, model.max_extra_replicas)
    if exact:
        loads = [Fraction(w) for w in loads]
    stats = _ShareStats(loads, counts, config.exclude_zero_load)
    heap = [(_share_key(w, 1, exact), e) for e, w in enumerate(loads)]
    heapq.heapify(heap)
    while (extra + 1) * model.expert_mem <= model.layer_mem_cap and stats.exceeds(v):
        _, e = heapq.heappop(heap)
        stats.remove(loads[e], counts[e])
        counts[e] += 1
        extra += 1
        stats.add(loads[e], counts[e])
        heapq.heappush(heap, (_share_key(loads[e], counts[e], exact), e))
        if trace is not None:
            trace.append(tuple(counts))
    return ScalingPlan.even(layer, loads, counts, model.expert_mem)


def no_scaling(predicted, model):
    loads = predicted.loads if isinstance(predicted, LoadVector) else tuple(predicted)
    layer = predicted.layer if isinstance(predicted, LoadVector) else 0
    return ScalingPlan.even(layer, loads, [1] * len(loads), model.expert_mem)


def budget_scaling(loads, budget, model, layer=0):
    """Give exactly ``budget`` extra replicas to the largest per-replica shares."""
    loads = [Fraction(w) for w in loads]
    counts = [1] * len(loads)
    heap = [(-w, e) for e, w in enumerate(loads)]
    heapq.heapify(heap)
    for _ in range(budget):
        _, e = heapq.heappop(heap)
        counts[e] += 1
        heapq.heappush(heap, (-loads[e] / counts[e], e))
    return ScalingPlan.even(layer, loads, counts, model.expert_mem)


@dataclass
class PlanReport:
    ok: bool
    problems: list = field(default_factory=list)
    cv: float = 0.0

    def __bool__(self):
        return self.ok


def verify_plan(plan, predicted, model, config):
    """Check a plan's invariants; returns a report that is truthy when valid."""
    loads = predicted.loads if isinstance(predicted, LoadVector) else tuple(predicted)
    problems = []
    if len(plan.replica_counts) != len(loads):
        return PlanReport(False, [f"plan has {len(plan.replica_counts)} experts, load vector {len(loads)}"])
    by_expert = {e: [] for e in range(len(loads))}
    for e, r, s in plan.shares:
        if e not in by_expert:
            problems.append(f"share for unknown expert {e}")
            continue
        if s < 0:
            problems.append(f"expert {e} replica {r} has negative share")
        by_expert[e].append((r, Fraction(s)))
    for e, w in enumerate(loads):
        count = plan.replica_counts[e]
        got = by_expert[e]
        if count < 1:
            problems.append(f"expert {e} has {count} replicas")
        if sorted(r for r, _ in got) != list(range(count)):
            problems.append(f"expert {e} replica ordinals {sorted(r for r, _ in got)} != 0..{count - 1}")
        if sum((s for _, s in got), Fraction(0)) != Fraction(w):
            problems.append(f"expert {e} shares do not sum to its load {w}")
        if len({s for _, s in got}) > 1:
            problems.append(f"expert {e} has unequal shares")
    expected_alloc = (plan.total_replicas - len(loads)) * model.expert_mem
    if abs(plan.alloc_mem - expected_alloc) > 1e-9 * max(1.0, expected_alloc):
        problems.append(f"alloc_mem {plan.alloc_mem} != {expected_alloc}")
    if plan.alloc_mem > model.layer_mem_cap + 1e-9:
        problems.append(f"alloc_mem {plan.alloc_mem} exceeds layer_mem_cap {model.layer_mem_cap}")
    shares = [s for _, _, s in plan.shares]
    if config.exclude_zero_load:
        shares = [s for e, _, s in plan.shares if loads[e] != 0]
    cv = coefficient_of_variation(shares) if shares else 0.0
    stopped_by_cv = not shares or not cv_exceeds(shares, config.cv_threshold)
    extra = plan.total_replicas - len(loads)
    stopped_by_budget = (extra + 1) * model.expert_mem > model.layer_mem_cap
    if not (stopped_by_cv or stopped_by_budget):
        problems.append(f"CV {cv:.4f} > {config.cv_threshold} with budget left")
    return PlanReport(not problems, problems, cv)
