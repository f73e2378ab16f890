import numpy as np
import pytest
from scipy import stats

from expertscale.errors import TraceParseError
from expertscale.workload import (DECODE, PREFILL, IterationBatch, PopularityProfile, Request, batch_requests,
                                  gen_synthetic_trace, materialize_loads, parse_trace, route_tokens,
                                  write_trace, zipf_weights)
from expertscale.cost_model import ModelSpec


def write(tmp_path, text, name="t.trace"):
    p = tmp_path / name
    p.write_text(text)
    return p


# parse_trace

def test_parse_three_lines_sorted(tmp_path):
    p = write(tmp_path, "30,5,2\n10,7,1\n20,3,4\n")
    got = parse_trace(p)
    assert [r.arrival_ms for r in got] == [10, 20, 30]
    assert got[0] == Request(10, 7, 1)


def test_parse_zero_prompt_names_line(tmp_path):
    p = write(tmp_path, "0,5,1\n5,0,2\n")
    with pytest.raises(TraceParseError) as exc:
        parse_trace(p)
    assert exc.value.lineno == 2
    assert ":2:" in str(exc.value)


def test_parse_out_of_order_is_stable(tmp_path):
    p = write(tmp_path, "50,1,1\n10,2,1\n50,3,1\n10,4,1\n")
    got = parse_trace(p)
    assert [(r.arrival_ms, r.prompt_tokens) for r in got] == [(10, 2), (10, 4), (50, 1), (50, 3)]


@pytest.mark.parametrize("line,fragment", [
    ("1,2", "expected 3 fields"),
    ("1,2,3,4", "expected 3 fields"),
    ("a,2,3", "non-integer"),
    ("1,-2,3", "negative"),
    ("1,2,-3", "negative"),
])
def test_parse_errors(tmp_path, line, fragment):
    p = write(tmp_path, f"# header\n0,1,1\n{line}\n")
    with pytest.raises(TraceParseError, match=fragment) as exc:
        parse_trace(p)
    assert exc.value.lineno == 3


def test_parse_whitespace_and_comments(tmp_path):
    p = write(tmp_path, "# arrival prompt output\n\n0 4\t2\n  7,1,0  \n")
    assert parse_trace(p) == [Request(0, 4, 2), Request(7, 1, 0)]


def test_write_parse_round_trip(tmp_path):
    reqs = gen_synthetic_trace(50, 3.0, seed=4)
    path = tmp_path / "rt.trace"
    write_trace(path, reqs)
    assert parse_trace(path) == reqs
    assert len(path.read_text().splitlines()) == 50


def test_request_invariants():
    with pytest.raises(ValueError):
        Request(0, 0, 1)
    with pytest.raises(ValueError):
        Request(-1, 1, 1)
    with pytest.raises(ValueError):
        Request(0, 1, -1)


# gen_synthetic_trace

def test_synthetic_deterministic():
    assert gen_synthetic_trace(10, 2.0, seed=42) == gen_synthetic_trace(10, 2.0, seed=42)
    assert gen_synthetic_trace(10, 2.0, seed=42) != gen_synthetic_trace(10, 2.0, seed=43)


def test_synthetic_rate_scaling():
    fast = gen_synthetic_trace(10_000, 1000.0, seed=1)
    slow = gen_synthetic_trace(10_000, 1.0, seed=1)
    # the oracle is the exponential mean 1000/rate ms; floor() shifts each arrival by < 1 ms
    gap_fast = fast[-1].arrival_ms / (len(fast) - 1)
    gap_slow = slow[-1].arrival_ms / (len(slow) - 1)
    assert gap_slow / gap_fast == pytest.approx(1000.0, rel=0.10)


def test_synthetic_single_request():
    (r,) = gen_synthetic_trace(1, 2.0, seed=0)
    assert 0 <= r.arrival_ms < 10**9
    assert r.prompt_tokens >= 1


@pytest.mark.parametrize("rate", [0, -1.0])
def test_synthetic_rejects_bad_rate(rate):
    with pytest.raises(ValueError):
        gen_synthetic_trace(5, rate)


def test_synthetic_sorted_and_valid():
    reqs = gen_synthetic_trace(500, 20.0, seed=3)
    assert [r.arrival_ms for r in reqs] == sorted(r.arrival_ms for r in reqs)
    assert all(r.prompt_tokens >= 1 and r.output_tokens >= 0 for r in reqs)


# batch_requests

def test_batch_single_request():
    got = batch_requests([Request(0, 8, 3)])
    assert [(b.phase, b.token_count) for b in got] == [(PREFILL, 8), (DECODE, 1), (DECODE, 1), (DECODE, 1)]
    assert [b.iteration for b in got] == [0, 1, 2, 3]


def test_batch_two_requests_same_second():
    got = batch_requests([Request(100, 5, 2), Request(900, 7, 1)])
    assert [(b.phase, b.token_count) for b in got] == [(PREFILL, 12), (DECODE, 2), (DECODE, 1)]


def test_batch_empty():
    assert batch_requests([]) == []


def test_batch_separate_seconds():
    got = batch_requests([Request(0, 4, 1), Request(1500, 6, 2)])
    assert [(b.phase, b.token_count) for b in got] == [
        (PREFILL, 4), (DECODE, 1), (PREFILL, 6), (DECODE, 1), (DECODE, 1)]


def test_batch_zero_output_has_no_decode():
    assert [(b.phase, b.token_count) for b in batch_requests([Request(0, 3, 0)])] == [(PREFILL, 3)]


# routing

def test_route_uniform_shares():
    prof = PopularityProfile(1, 8, zipf_exponent=0.0, seed=0)
    lv = route_tokens(IterationBatch(0, PREFILL, 1_000_000), 0, prof, 2, 8, seed=5)
    total = lv.total
    assert total == 2_000_000
    for x in lv.loads:
        assert x == pytest.approx(total / 8, rel=0.02)


def test_route_zero_tokens():
    prof = PopularityProfile(1, 8, seed=0)
    assert route_tokens(IterationBatch(0, DECODE, 0), 0, prof, 2, 8, seed=0).loads == (0,) * 8


def test_route_ranking_matches_profile():
    prof = PopularityProfile(1, 8, zipf_exponent=1.2, seed=3)
    lv = route_tokens(IterationBatch(0, PREFILL, 200_000), 0, prof, 1, 8, seed=0)
    by_load = np.argsort(-lv.as_array(), kind="stable")
    assert by_load.tolist() == prof.permutation(0).tolist()


def test_route_topk_distinct_experts():
    # with k = E every token must hit every expert exactly once
    prof = PopularityProfile(1, 5, zipf_exponent=2.0, seed=0)
    lv = route_tokens(IterationBatch(0, PREFILL, 1000), 0, prof, 5, 5, seed=1)
    assert lv.loads == (1000,) * 5


def test_route_conservation_and_determinism():
    prof = PopularityProfile(3, 16, seed=2)
    for layer in range(3):
        a = route_tokens(IterationBatch(7, DECODE, 333), layer, prof, 2, 16, seed=9)
        b = route_tokens(IterationBatch(7, DECODE, 333), layer, prof, 2, 16, seed=9)
        assert a == b
        assert a.total == 666


def test_route_topk_too_large():
    prof = PopularityProfile(1, 4, seed=0)
    with pytest.raises(ValueError):
        route_tokens(IterationBatch(0, PREFILL, 10), 0, prof, 5, 4, seed=0)


def test_route_topk_sampling_matches_exact_distribution():
    # oracle: exact probability that an expert is among the k=2 sequential draws without replacement
    w = zipf_weights(4, 1.2)
    expect = np.array([w[e] + sum(w[f] * w[e] / (1 - w[f]) for f in range(4) if f != e) for e in range(4)])
    prof = PopularityProfile(1, 4, zipf_exponent=1.2, seed=0)
    perm = prof.permutation(0)
    lv = route_tokens(IterationBatch(0, PREFILL, 400_000), 0, prof, 2, 4, seed=11)
    share_by_rank = lv.as_array()[perm] / 400_000
    assert share_by_rank == pytest.approx(expect, abs=0.005)


def test_stationary_loads_chi_square():
    model = ModelSpec(num_layers=1, experts_per_layer=8, top_k=2)
    prof = PopularityProfile(1, 8, 1.2, seed=0)
    batches = [IterationBatch(i, PREFILL, 2000) for i in range(60)]
    loads = materialize_loads(batches, prof, model, seed=4)[:, 0, :]
    first, second = loads[:30].sum(axis=0), loads[30:].sum(axis=0)
    _, p, _, _ = stats.chi2_contingency(np.vstack([first, second]))
    assert p > 1e-3


def test_profile_permutations():
    prof = PopularityProfile(4, 10, seed=1)
    for layer in range(4):
        assert sorted(prof.permutation(layer).tolist()) == list(range(10))
    assert any(prof.permutation(0).tolist() != prof.permutation(l).tolist() for l in range(1, 4))
    shared = PopularityProfile(4, 10, seed=1, shared_permutation=True)
    assert all(shared.permutation(l).tolist() == shared.permutation(0).tolist() for l in range(4))


def test_profile_drift():
    prof = PopularityProfile(1, 16, drift_period=10, seed=0)
    assert prof.permutation(0, 0).tolist() == prof.permutation(0, 9).tolist()
    assert prof.permutation(0, 0).tolist() != prof.permutation(0, 10).tolist()


def test_profile_decode_exponent():
    prof = PopularityProfile(1, 8, zipf_exponent=1.2, decode_exponent=0.0, seed=0)
    assert np.allclose(prof.expert_weights(0, 0, DECODE), 1 / 8)
    assert not np.allclose(prof.expert_weights(0, 0, PREFILL), 1 / 8)


def test_profile_rejects_bad_parameters():
    with pytest.raises(ValueError):
        PopularityProfile(1, 4, zipf_exponent=-0.1)
    with pytest.raises(ValueError):
        PopularityProfile(1, 4, drift_period=-1)


def test_materialize_shape():
    model = ModelSpec(num_layers=3, experts_per_layer=6, top_k=2)
    batches = batch_requests([Request(0, 10, 2)])
    loads = materialize_loads(batches, PopularityProfile(3, 6, seed=0), model, seed=0)
    assert loads.shape == (3, 3, 6)
    assert loads.sum(axis=2).tolist() == [[20] * 3, [2] * 3, [2] * 3]
