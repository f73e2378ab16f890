"""Expert-load prediction ``d`` layers ahead.

Learned gate-network predictors are replaced by accuracy-parameterized
stand-ins:

* ``oracle`` returns the true future loads.
* ``noisy`` keeps each token on its true expert with some probability and
  reassigns the rest. By default the keep probability is calibrated so the
  expected load overlap with the truth equals the layer's configured accuracy.
* ``historical`` averages recent loads of the same layer (EPLB-style usage
  statistics) and rescales them to the current token count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .cost_model import LoadVector

ORACLE = "oracle"
NOISY = "noisy"
HISTORICAL = "historical"
KINDS = (ORACLE, NOISY, HISTORICAL)

# accuracy lost per extra layer of prediction distance
DISTANCE_DECAY = 0.04


@dataclass(frozen=True)
class PredictorProfile:
    kind: str = NOISY
    distance: int = 1
    per_layer_accuracy: tuple = ()
    accuracy_threshold: float = 0.8
    history_window: int = 20
    fine_tuned: tuple = ()
    reassignment: str = "uniform"  # or "popularity"
    calibrated: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown predictor kind {self.kind!r}")
        if self.distance < 0:
            raise ValueError("distance must be >= 0")
        if not 0.0 <= self.accuracy_threshold <= 1.0:
            raise ValueError("accuracy_threshold must lie in [0, 1]")
        if any(not 0.0 <= a <= 1.0 for a in self.per_layer_accuracy):
            raise ValueError("per-layer accuracies must lie in [0, 1]")
        if self.history_window < 1:
            raise ValueError("history_window must be >= 1")
        if self.reassignment not in ("uniform", "popularity"):
            raise ValueError(f"unknown reassignment {self.reassignment!r}")
        object.__setattr__(self, "per_layer_accuracy", tuple(float(a) for a in self.per_layer_accuracy))
        ft = tuple(bool(x) for x in self.fine_tuned) or (False,) * len(self.per_layer_accuracy)
        if len(ft) != len(self.per_layer_accuracy):
            raise ValueError("fine_tuned must have one entry per layer")
        object.__setattr__(self, "fine_tuned", ft)


def default_accuracies(num_layers, low=0.7, high=0.95):
    """Early layers predict worse than late ones."""
    if num_layers == 1:
        return (high,)
    return tuple(round(low + (high - low) * l / (num_layers - 1), 6) for l in range(num_layers))


def at_distance(profile, distance, slope=DISTANCE_DECAY):
    """Profile for a new prediction distance, accuracies decayed linearly past d=1."""
    shift = slope * max(distance - 1, 0)
    acc = tuple(min(1.0, max(0.0, a - shift)) for a in profile.per_layer_accuracy)
    return replace(profile, distance=distance, per_layer_accuracy=acc)


def apply_layer_aware_finetuning(profile):
    if profile.kind != NOISY:
        raise ValueError("layer-aware fine-tuning applies to the noisy predictor")
    h = profile.accuracy_threshold
    acc = list(profile.per_layer_accuracy)
    tuned = list(profile.fine_tuned)
    for l, a in enumerate(acc):
        if a < h:
            acc[l] = h
            tuned[l] = True
    return replace(profile, per_layer_accuracy=tuple(acc), fine_tuned=tuple(tuned))


def round_preserving_total(values, total):
    """Largest-remainder rounding of non-negative weights to integers summing to ``total``."""
    exact = [Fraction(v) for v in values]
    s = sum(exact)
    if s == 0:
        exact = [Fraction(1)] * len(exact)
        s = Fraction(len(exact))
    scaled = [v * total / s for v in exact]
    floors = [math.floor(v) for v in scaled]
    short = total - sum(floors)
    # ties go to the lowest index
    order = sorted(range(len(scaled)), key=lambda e: (-(scaled[e] - floors[e]), e))
    for e in order[:short]:
        floors[e] += 1
    return floors


def historical_estimate(history, total, num_experts, window):
    """Returns (loads, used_fallback)."""
    recent = history[-window:] if history else []
    if not recent:
        return round_preserving_total([1] * num_experts, total), True
    summed = [sum(int(v.loads[e]) for v in recent) for e in range(num_experts)]
    return round_preserving_total(summed, total), False


def _keep_probability(accuracy, true_frac, reassign):
    # E[overlap] = 1 - (1 - q) * TV(reassign, truth); solve for q
    tv = 0.5 * float(np.abs(reassign - true_frac).sum())
    if tv <= 1e-12:
        return 1.0
    return min(1.0, max(0.0, 1.0 - (1.0 - accuracy) / tv))


def _overlap(a, b):
    return float(np.minimum(a, b).sum())


def _noise_model(accuracy, true_frac, reassign):
    """Keep probability and reassignment distribution hitting ``accuracy``.

    If even reassigning every token to ``reassign`` overlaps the truth by more
    than ``accuracy``, the reassignment is tilted towards the least popular
    expert until the expected overlap matches (or nothing more can be lost).
    """
    floor = _overlap(reassign, true_frac)
    if accuracy >= floor:
        return _keep_probability(accuracy, true_frac, reassign), reassign
    sink = np.zeros_like(reassign)
    sink[int(np.argmin(true_frac))] = 1.0
    lo, hi = 0.0, 1.0
    if _overlap(sink, true_frac) >= accuracy:
        return 0.0, sink
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _overlap((1.0 - mid) * reassign + mid * sink, true_frac) > accuracy:
            lo = mid
        else:
            hi = mid
    return 0.0, (1.0 - hi) * reassign + hi * sink


def predict(actual_future, history, profile, seed, iteration=0, popularity=None):
    """Predicted load vector for the layer of ``actual_future``.

    ``actual_future`` is the hidden ground truth; only the oracle and the
    noisy stand-in look at it. ``popularity`` is the layer's expert
    distribution, used when ``profile.reassignment == "popularity"``.
    """
    layer = actual_future.layer
    w = actual_future.as_array()
    total = int(w.sum())
    E = len(w)
    if profile.kind == ORACLE:
        return actual_future
    if profile.kind == HISTORICAL:
        loads, _ = historical_estimate(history, total, E, profile.history_window)
        return LoadVector(layer, loads)
    accuracy = profile.per_layer_accuracy[layer]
    if total == 0 or accuracy >= 1.0:
        return actual_future
    if profile.reassignment == "popularity" and popularity is not None:
        reassign = np.asarray(popularity, dtype=np.float64)
        reassign = reassign / reassign.sum()
    else:
        reassign = np.full(E, 1.0 / E)
    if profile.calibrated:
        keep, reassign = _noise_model(accuracy, w / total, reassign)
    else:
        keep = accuracy
    rng = np.random.default_rng([seed, iteration, layer, 0xACC])
    kept = rng.binomial(w, keep)
    moved = total - int(kept.sum())
    out = kept + rng.multinomial(moved, reassign)
    return LoadVector(layer, out.tolist())


def measure_accuracy(predicted, actual):
    """Load overlap: fraction of the actual tokens the prediction covers."""
    p = np.asarray(predicted.loads if isinstance(predicted, LoadVector) else predicted, dtype=np.float64)
    a = np.asarray(actual.loads if isinstance(actual, LoadVector) else actual, dtype=np.float64)
    if p.shape != a.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {a.shape}")
    at = a.sum()
    if at == 0:
        return 1.0 if not p.any() else 0.0
    pt = p.sum()
    if pt == 0:
        return 0.0
    if pt != at:
        p = p * (at / pt)
    return float(np.minimum(p, a).sum() / at)
