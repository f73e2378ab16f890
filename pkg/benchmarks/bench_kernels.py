"""Time the compiled kernels against the numpy/Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--tokens 200000]

Both backends are imported directly, so the EXPERTSCALE_PURE_PYTHON switch
does not matter here. Results are checked for equality before timing.
"""

import argparse
import sys
import timeit

import numpy as np

from expertscale import _fallback

try:
    from expertscale import _kernels
except ImportError:
    _kernels = None


def route_case(tokens, experts, k, seed):
    rng = np.random.default_rng(seed)
    w = 1.0 / np.arange(1, experts + 1) ** 1.2
    return rng.permutation(w), rng.random((tokens, k))


def makespan_case(n, seed):
    rng = np.random.default_rng(seed)
    return rng.integers(1, 100, n).astype(np.int64)


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--tokens", type=int, default=200_000)
    p.add_argument("--experts", type=int, default=16)
    p.add_argument("--top-k", type=int, default=2)
    p.add_argument("--replicas", type=int, default=10, help="items in the exact makespan search")
    p.add_argument("--gpus", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if _kernels is None:
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1

    w, u = route_case(args.tokens, args.experts, args.top_k, args.seed)
    sizes = makespan_case(args.replicas, args.seed)
    if not np.array_equal(_kernels.route_topk(w, u), _fallback.route_topk(w, u)):
        raise SystemExit("route_topk backends disagree")
    if _kernels.min_makespan(sizes, args.gpus, args.replicas)[0] != \
            _fallback.min_makespan(sizes.tolist(), args.gpus, args.replicas)[0]:
        raise SystemExit("min_makespan backends disagree")

    cases = [
        (f"route_topk  tokens={args.tokens} E={args.experts} k={args.top_k}",
         lambda: _kernels.route_topk(w, u), lambda: _fallback.route_topk(w, u)),
        (f"min_makespan n={args.replicas} G={args.gpus}",
         lambda: _kernels.min_makespan(sizes, args.gpus, args.replicas),
         lambda: _fallback.min_makespan(sizes.tolist(), args.gpus, args.replicas)),
    ]
    print(f"{'kernel':<44} {'compiled_s':>11} {'fallback_s':>11} {'speedup':>8}")
    for name, fast, slow in cases:
        t_fast, t_slow = best_of(fast, args.repeat), best_of(slow, args.repeat)
        print(f"{name:<44} {t_fast:11.5f} {t_slow:11.5f} {t_slow / t_fast:7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
