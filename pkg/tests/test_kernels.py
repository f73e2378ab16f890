import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from expertscale import _fallback, kernels

try:
    from expertscale import _kernels
except ImportError:  # extension not built
    _kernels = None

needs_ext = pytest.mark.skipif(_kernels is None, reason="compiled kernels not built")


def _backend_in_subprocess(env):
    code = "from expertscale import kernels; print(kernels.BACKEND)"
    return subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                          check=True).stdout.strip()


def test_env_var_forces_fallback():
    env = dict(os.environ, EXPERTSCALE_PURE_PYTHON="1")
    assert _backend_in_subprocess(env) == "python"


def test_default_backend():
    env = {k: v for k, v in os.environ.items() if k != "EXPERTSCALE_PURE_PYTHON"}
    expect = _kernels.BACKEND if _kernels is not None else "python"
    assert _backend_in_subprocess(env) == expect


@st.composite
def routing(draw):
    E = draw(st.integers(1, 12))
    k = draw(st.integers(1, E))
    w = draw(st.lists(st.floats(0.0, 10.0), min_size=E, max_size=E))
    if sum(1 for x in w if x > 0) < k:
        w = [x + 1.0 for x in w]
    n = draw(st.integers(0, 300))
    seed = draw(st.integers(0, 2**32 - 1))
    u = np.random.default_rng(seed).random((n, k))
    return np.asarray(w, dtype=np.float64), u


@needs_ext
@given(routing())
def test_route_topk_backends_agree(inst):
    w, u = inst
    assert np.array_equal(_kernels.route_topk(w, u), _fallback.route_topk(w, u))


@given(routing())
def test_route_topk_distinct_and_conserving(inst):
    w, u = inst
    counts = kernels.route_topk(w, u)
    k = u.shape[1]
    assert counts.sum() == u.shape[0] * k
    assert counts.max(initial=0) <= u.shape[0]
    assert all(counts[e] == 0 for e in range(len(w)) if w[e] == 0)


@needs_ext
@given(st.lists(st.integers(0, 50), max_size=8), st.integers(1, 4), st.integers(1, 8))
def test_min_makespan_backends_agree(sizes, G, cap):
    arr = np.asarray(sizes, dtype=np.int64)
    a = _kernels.min_makespan(arr, G, cap)
    b = _fallback.min_makespan(sizes, G, cap)
    assert a[0] == b[0]
    if a[0] >= 0:
        # both assignments must achieve the optimum within the slot cap
        for assign in (a[1], b[1]):
            loads = [sum(s for s, g in zip(sizes, assign) if g == gpu) for gpu in range(G)]
            assert max(loads, default=0) == a[0]
            assert all(list(assign).count(gpu) <= cap for gpu in range(G))


def test_min_makespan_infeasible_and_examples():
    assert kernels.min_makespan(np.asarray([1, 1, 1], dtype=np.int64), 1, 2)[0] == -1
    assert kernels.min_makespan(np.asarray([5, 5, 3, 2, 1], dtype=np.int64), 2, 5)[0] == 8
    assert kernels.min_makespan(np.asarray([], dtype=np.int64), 3, 1)[0] == 0
