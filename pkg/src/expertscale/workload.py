"""Request traces, per-second batching, and skewed token routing.

Trace files hold one request per line: ``arrival_ms,prompt_tokens,output_tokens``
(commas, tabs or spaces all work as delimiters). Blank lines and lines starting
with ``#`` are skipped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .cost_model import LoadVector
from .errors import TraceParseError

PREFILL = "prefill"
DECODE = "decode"

_SPLIT = re.compile(r"[,\s]+")


@dataclass(frozen=True)
class Request:
    arrival_ms: int
    prompt_tokens: int
    output_tokens: int

    def __post_init__(self):
        if self.arrival_ms < 0:
            raise ValueError("arrival_ms must be >= 0")
        if self.prompt_tokens < 1:
            raise ValueError("prompt_tokens must be >= 1")
        if self.output_tokens < 0:
            raise ValueError("output_tokens must be >= 0")


@dataclass(frozen=True)
class IterationBatch:
    iteration: int
    phase: str
    token_count: int


def parse_trace(path):
    path = Path(path)
    requests = []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f for f in _SPLIT.split(line) if f]
            if len(fields) != 3:
                raise TraceParseError(path, lineno, f"expected 3 fields, got {len(fields)}")
            try:
                arrival, prompt, output = (int(f) for f in fields)
            except ValueError:
                raise TraceParseError(path, lineno, f"non-integer field in {line!r}") from None
            if arrival < 0 or prompt < 0 or output < 0:
                raise TraceParseError(path, lineno, "negative value")
            if prompt == 0:
                raise TraceParseError(path, lineno, "prompt_tokens must be >= 1")
            requests.append(Request(arrival, prompt, output))
    # sorted() is stable, so equal timestamps keep file order
    return sorted(requests, key=lambda r: r.arrival_ms)


def write_trace(path, requests):
    path = Path(path)
    with path.open("w") as fh:
        for r in requests:
            fh.write(f"{r.arrival_ms},{r.prompt_tokens},{r.output_tokens}\n")


def gen_synthetic_trace(count, arrival_rate, prompt_median=256.0, prompt_sigma=0.8,
                        output_median=64.0, output_sigma=0.8, seed=0):
    """Poisson arrivals (``arrival_rate`` requests/s) with log-normal lengths."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if not arrival_rate > 0:
        raise ValueError("arrival_rate must be > 0")
    rng = np.random.default_rng(seed)
    gaps = rng.exponential(1000.0 / arrival_rate, size=count)
    arrivals = np.floor(np.cumsum(gaps)).astype(np.int64)
    prompts = np.maximum(1, np.rint(rng.lognormal(np.log(prompt_median), prompt_sigma, count)))
    outputs = np.maximum(1, np.rint(rng.lognormal(np.log(output_median), output_sigma, count)))
    return [Request(int(a), int(p), int(o)) for a, p, o in zip(arrivals, prompts, outputs)]


def batch_requests(requests):
    """One prefill batch per wall-clock second, then one decode batch per
    output position with one token for every sequence still generating."""
    batches = []
    groups = {}
    for r in requests:
        groups.setdefault(r.arrival_ms // 1000, []).append(r)
    for second in sorted(groups):
        group = groups[second]
        batches.append(IterationBatch(len(batches), PREFILL, sum(r.prompt_tokens for r in group)))
        longest = max(r.output_tokens for r in group)
        for pos in range(1, longest + 1):
            active = sum(1 for r in group if r.output_tokens >= pos)
            batches.append(IterationBatch(len(batches), DECODE, active))
    return batches


def zipf_weights(n, exponent):
    ranks = np.arange(1, n + 1, dtype=np.float64)
    w = ranks ** -float(exponent)
    return w / w.sum()


class PopularityProfile:
    """Zipf popularity over per-layer rank permutations of the experts.

    ``drift_period > 0`` redraws every layer's permutation each
    ``drift_period`` iterations. ``decode_exponent`` (default: same as
    ``zipf_exponent``) lets decode batches use a different skew.
    """

    def __init__(self, num_layers, num_experts, zipf_exponent=1.2, drift_period=0,
                 seed=0, shared_permutation=False, decode_exponent=None):
        if zipf_exponent < 0:
            raise ValueError("zipf_exponent must be >= 0")
        if drift_period < 0:
            raise ValueError("drift_period must be >= 0")
        self.num_layers = num_layers
        self.num_experts = num_experts
        self.zipf_exponent = float(zipf_exponent)
        self.decode_exponent = self.zipf_exponent if decode_exponent is None else float(decode_exponent)
        self.drift_period = drift_period
        self.seed = seed
        self.shared_permutation = shared_permutation
        self._perm_cache = {}
        self._rank_weights = {
            PREFILL: zipf_weights(num_experts, self.zipf_exponent),
            DECODE: zipf_weights(num_experts, self.decode_exponent),
        }

    def permutation(self, layer, iteration=0):
        """``perm[rank]`` is the expert holding popularity rank ``rank``."""
        epoch = iteration // self.drift_period if self.drift_period else 0
        key_layer = 0 if self.shared_permutation else layer
        key = (key_layer, epoch)
        perm = self._perm_cache.get(key)
        if perm is None:
            rng = np.random.default_rng([self.seed, 0x5EED, key_layer, epoch])
            perm = rng.permutation(self.num_experts)
            self._perm_cache[key] = perm
        return perm

    def expert_weights(self, layer, iteration=0, phase=PREFILL):
        w = np.empty(self.num_experts)
        w[self.permutation(layer, iteration)] = self._rank_weights[phase]
        return w


def route_tokens(batch, layer, profile, top_k, num_experts, seed):
    """Each token picks ``top_k`` distinct experts from the layer's popularity."""
    if top_k > num_experts:
        raise ValueError(f"top_k={top_k} exceeds experts_per_layer={num_experts}")
    if batch.token_count == 0:
        return LoadVector(layer, (0,) * num_experts)
    weights = profile.expert_weights(layer, batch.iteration, batch.phase)
    rng = np.random.default_rng([seed, batch.iteration, layer])
    u = rng.random((batch.token_count, top_k))
    counts = kernels.route_topk(np.ascontiguousarray(weights), u)
    return LoadVector(layer, counts.tolist())


def materialize_loads(batches, profile, model, seed):
    """Ground-truth load matrix of shape (iterations, layers, experts)."""
    out = np.zeros((len(batches), model.num_layers, model.experts_per_layer), dtype=np.int64)
    for i, batch in enumerate(batches):
        for layer in range(model.num_layers):
            out[i, layer] = route_tokens(batch, layer, profile, model.top_k,
                                         model.experts_per_layer, seed).loads
    return out
