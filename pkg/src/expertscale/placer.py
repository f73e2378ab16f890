"""Replica-to-GPU placement: warm reuse first, else join the shortest queue."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import PlacementInfeasibleError


@dataclass(frozen=True)
class Placement:
    layer: int
    gpu_count: int
    assignments: dict  # (expert, ordinal) -> gpu
    per_gpu_mem: tuple
    per_gpu_load: tuple = ()
    warm: int = 0
    cold: int = 0

    @property
    def makespan(self):
        return max(self.per_gpu_load, default=0)

    def gpu_of(self, expert, ordinal):
        return self.assignments[(expert, ordinal)]


@dataclass
class ReplicaRegistry:
    """Replicas kept alive between iterations, keyed by (layer, expert, ordinal)."""

    keep_alive_iters: int = 1
    entries: dict = field(default_factory=dict)  # key -> (gpu, last_used_iteration)

    def __post_init__(self):
        if self.keep_alive_iters < 0:
            raise ValueError("keep_alive_iters must be >= 0")

    def is_live(self, last_used, iteration):
        return iteration - last_used <= self.keep_alive_iters

    def lookup(self, layer, expert, ordinal, iteration):
        """GPU of a live replica, or None."""
        hit = self.entries.get((layer, expert, ordinal))
        if hit is None or not self.is_live(hit[1], iteration):
            return None
        return hit[0]

    def evict_stale(self, iteration, layer=None):
        dead = [k for k, (_, last) in self.entries.items()
                if (layer is None or k[0] == layer) and not self.is_live(last, iteration)]
        for k in dead:
            del self.entries[k]
        return len(dead)

    def __len__(self):
        return len(self.entries)


def _integer_shares(plan):
    """Shares scaled by a common denominator so comparisons stay exact on ints."""
    fracs = [Fraction(s) for _, _, s in plan.shares]
    scale = math.lcm(*(f.denominator for f in fracs)) if fracs else 1
    return [(e, r, int(f * scale)) for (e, r, _), f in zip(plan.shares, fracs)], scale


def _ordered_replicas(shares):
    # heaviest share first; ties -> lowest expert, then lowest ordinal
    return sorted(shares, key=lambda t: (-t[2], t[0], t[1]))


def place_experts(plan, cluster, registry, iteration, expert_mem):
    """Place every replica of ``plan``.

    A replica whose (layer, expert, ordinal) is live in ``registry`` goes back
    to its recorded GPU if that GPU still has memory for it (warm start);
    otherwise it joins the GPU with the smallest accumulated share among
    those with free memory (ties -> lowest GPU index). The registry is not
    modified; call :func:`update_registry` afterwards.
    """
    G = cluster.gpu_count
    cap = cluster.gpu_mem_capacity
    need = plan.total_replicas * expert_mem
    if need > G * cap:
        raise PlacementInfeasibleError(
            f"layer {plan.layer}: {plan.total_replicas} replicas need {need} MB, "
            f"cluster holds {G * cap} MB", layer=plan.layer, iteration=iteration)
    shares, scale = _integer_shares(plan)
    load = [0] * G
    mem = [0.0] * G
    assignments = {}
    warm = cold = 0
    for e, r, share in _ordered_replicas(shares):
        g = None
        if registry is not None:
            prev = registry.lookup(plan.layer, e, r, iteration)
            if prev is not None and prev < G and mem[prev] + expert_mem <= cap:
                g = prev
                warm += 1
        if g is None:
            fits = [h for h in range(G) if mem[h] + expert_mem <= cap]
            if not fits:
                raise PlacementInfeasibleError(
                    f"layer {plan.layer}: no GPU has {expert_mem} MB free for expert {e} replica {r}",
                    layer=plan.layer, replica=(e, r), iteration=iteration)
            g = min(fits, key=lambda h: (load[h], h))
            cold += 1
        assignments[(e, r)] = g
        load[g] += share
        mem[g] += expert_mem
    per_gpu = tuple(Fraction(x, scale) for x in load)
    return Placement(plan.layer, G, assignments, tuple(mem), per_gpu, warm, cold)


def cold_place(plan, cluster, expert_mem):
    """Join-the-shortest-queue placement with no warm replicas."""
    return place_experts(plan, cluster, None, 0, expert_mem)


def round_robin_place(plan, cluster, expert_mem):
    """Replica ``i`` (in expert, ordinal order) goes to GPU ``i mod G``."""
    G = cluster.gpu_count
    mem = [0.0] * G
    load = [Fraction(0)] * G
    assignments = {}
    for i, (e, r, share) in enumerate(plan.shares):
        g = i % G
        if mem[g] + expert_mem > cluster.gpu_mem_capacity:
            raise PlacementInfeasibleError(
                f"layer {plan.layer}: GPU {g} cannot hold expert {e} replica {r}",
                layer=plan.layer, replica=(e, r))
        assignments[(e, r)] = g
        mem[g] += expert_mem
        load[g] += Fraction(share)
    return Placement(plan.layer, G, assignments, tuple(mem), tuple(load), 0, 0)


def update_registry(registry, placement, iteration):
    """Record this layer's replicas as used at ``iteration`` and drop the rest.

    Ordinals beyond an expert's new replica count are released, and this
    layer's entries past the keep-alive window are evicted. Mutates and
    returns ``registry``.
    """
    counts = {}
    for (e, r), g in placement.assignments.items():
        registry.entries[(placement.layer, e, r)] = (g, iteration)
        counts[e] = max(counts.get(e, 0), r + 1)
    released = [k for k in registry.entries
                if k[0] == placement.layer and k[2] >= counts.get(k[1], 0)]
    for k in released:
        del registry.entries[k]
    registry.evict_stale(iteration, placement.layer)
    return registry
