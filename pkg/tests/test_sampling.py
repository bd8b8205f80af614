import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ranksample.errors import InputError, ReuseError, ValidationError
from ranksample.metrics import MetricSpec, System, target_distribution
from ranksample.sampling import (
    ApproxUtility,
    EvalTask,
    IdenticalSystems,
    SamplerSpec,
    SamplingDistribution,
    approx_values,
    build_sampler,
    draw,
    heuristic_sampler,
    mixture,
    optimal_pair,
    optimal_ranking,
    optimal_single,
    optimal_tau,
    optimal_vs_baseline,
    random_distribution,
    smooth,
)

DCG = MetricSpec("dcg", max_utility=3.0)
TRUE = ApproxUtility("true-oracle")


def test_single_is_proportional_to_u_times_w(toy):
    oracle, s1, _, X = toy
    q = optimal_single(s1, DCG, TRUE, X, oracle)
    # û is floored at 1e-6 * M; independent construction from (query, doc) dictionaries
    mass = {}
    for x in X:
        for r, d in enumerate(s1.ranking(x).docs, start=1):
            m = max(oracle.doc_utility(x, d), 3e-6) / math.log2(1 + r) / len(X)
            if m > 0:
                mass[(x, (d,))] = m
    z = math.fsum(mass.values())
    assert q.entries == pytest.approx({k: v / z for k, v in mass.items()}, rel=1e-14)
    assert math.fsum(q.probs) == pytest.approx(1.0, abs=1e-15)


def test_pair_mass_is_abs_difference(toy):
    oracle, s1, s2, X = toy
    q = optimal_pair(s1, s2, DCG, TRUE, X, oracle)
    t1 = target_distribution(s1, DCG, X).entries
    t2 = target_distribution(s2, DCG, X).entries
    keys = set(t1) | set(t2)
    mass = {k: max(oracle.utility(*k), 3e-6) * abs(t1.get(k, 0) - t2.get(k, 0)) for k in keys}
    mass = {k: v for k, v in mass.items() if v > 0}
    z = math.fsum(mass.values())
    assert q.entries == pytest.approx({k: v / z for k, v in mass.items()}, rel=1e-12)


def test_identical_systems_signal(toy):
    oracle, s1, _, X = toy
    twin = System("twin", s1.rankings)
    out = optimal_pair(s1, twin, DCG, TRUE, X, oracle)
    assert isinstance(out, IdenticalSystems)
    assert set(out.system_ids) == {"S1", "twin"}
    assert isinstance(optimal_ranking([s1, twin], DCG, TRUE, X, oracle), IdenticalSystems)


def test_vs_baseline_mass(small):
    a, b, c = small.systems[:3]
    q = optimal_vs_baseline([a, b], c, small.metric, TRUE, small.queries, small.oracle)
    task = EvalTask("vs_baseline", (a, b), small.metric, small.queries, c)
    W = task.tables.weights
    u = small.oracle.values(task.tables.space, task.tables.universe)
    g = np.maximum(u, 4e-6) * np.sqrt((W[0] - W[2]) ** 2 + (W[1] - W[2]) ** 2)
    ref = g / g.sum()
    np.testing.assert_allclose(q.lookup(task.tables.universe), ref, rtol=1e-12, atol=1e-18)


def test_tau_is_entrywise_mean(small):
    s = small.systems[:3]
    tau = optimal_tau(s, small.metric, small.queries)
    ents = [target_distribution(x, small.metric, small.queries).entries for x in s]
    keys = set().union(*ents)
    for k in keys:
        assert tau.entries[k] == pytest.approx(sum(e.get(k, 0.0) for e in ents) / 3, rel=1e-14)
    with pytest.raises(InputError):
        optimal_tau(s[:1], small.metric, small.queries)


def test_constant_approx_reduces_to_target(toy):
    oracle, s1, _, X = toy
    q = optimal_single(s1, DCG, ApproxUtility("constant", scale=2.0), X)
    t = target_distribution(s1, DCG, X)
    np.testing.assert_allclose(q.probs, t.weights / t.weights.sum(), rtol=1e-14)


def test_rank_decay_averages_over_rankers(toy):
    _, s1, s2, X = toy
    ap = ApproxUtility("rank-decay", scale=4.0, horizon=4.0)
    t = target_distribution(s1, DCG, X)
    codes = t.space.encode_keys([("q1", ("a",)), ("q1", ("d",))])
    one = approx_values(ap, [s1], DCG, X, t.space, codes)
    both = approx_values(ap, [s1, s2], DCG, X, t.space, codes)
    # a: rank 1 in S1, rank 2 in S2; d: rank 4 in S1 (floored), rank 1 in S2
    assert one.tolist() == [3.0, 3e-6]
    assert both.tolist() == [2.5, 1.5]


def test_smoothing():
    from ranksample.metrics import KeySpace
    ks = KeySpace(["q"], "abcd")
    universe = ks.encode([0, 0, 0, 0], [0, 1, 2, 3])
    q = SamplingDistribution(ks, universe[:2], np.array([0.75, 0.25]), universe)
    s = smooth(q, 0.2)
    assert s.probs.tolist() == pytest.approx([0.65, 0.25, 0.05, 0.05])
    assert smooth(q, 0.0) is q
    with pytest.raises(InputError):
        smooth(q, 1.0)


def test_mixture_density():
    from ranksample.metrics import KeySpace
    ks = KeySpace(["q"], "abc")
    u = ks.encode([0, 0, 0], [0, 1, 2])
    q1 = SamplingDistribution(ks, u[:2], np.array([0.5, 0.5]), u)
    q2 = SamplingDistribution(ks, u[1:], np.array([0.25, 0.75]), u)
    m = mixture([q1, q2], [30, 10])
    assert m.probs.tolist() == pytest.approx([0.375, 0.4375, 0.1875])


def test_heuristics(small):
    s = small.systems[:2]
    uni = heuristic_sampler("uniform", s, small.metric, None, small.queries)
    assert np.allclose(uni.probs, 1 / len(uni))
    with pytest.raises(InputError):
        heuristic_sampler("naive_average", s, small.metric, None, small.queries)
    with pytest.raises(InputError):
        heuristic_sampler("bogus", s, small.metric, None, small.queries)


def test_draw_is_seeded_and_faithful(small):
    q = heuristic_sampler("target_only", small.systems[:1], small.metric, None, small.queries)
    a = draw(q, 500, 3)
    assert a == draw(q, 500, 3)
    assert a != draw(q, 500, 4)
    big = draw(q, 200_000, 5)
    counts = {}
    for x, part, _ in big:
        counts[(x, part)] = counts.get((x, part), 0) + 1
    ent = q.entries
    # each observed frequency within 5 binomial sigmas
    for k, p in ent.items():
        sd = math.sqrt(200_000 * p * (1 - p))
        assert abs(counts.get(k, 0) - 200_000 * p) <= 5 * sd + 1


@given(st.floats(0.0, 0.99), st.sampled_from(["single", "pair", "ranking", "naive_average"]))
@settings(max_examples=30)
def test_spec_json_roundtrip(eps, task):
    systems = {"single": ("A",), "pair": ("A", "B")}.get(task, ("A", "B", "C"))
    spec = SamplerSpec(task, "dcg@10,M=4.0", systems, epsilon=eps,
                       approx_utility=ApproxUtility("rank-decay", scale=4.0, horizon=10.0))
    assert SamplerSpec.from_json(spec.to_json()) == spec
    assert SamplerSpec.from_json(spec.to_json()).to_json() == spec.to_json()


def test_spec_validation():
    with pytest.raises(ValidationError):
        SamplerSpec("pairwise", "dcg", ("A",))
    with pytest.raises(ValidationError):
        SamplerSpec("pair", "dcg", ())
    with pytest.raises(ValidationError):
        SamplerSpec.from_json('{"task": "pair"}')
    with pytest.raises(ValidationError):
        ApproxUtility.from_dict({"mode": "constant", "colour": 1})


def test_build_sampler_missing_system(small):
    spec = SamplerSpec("pair", small.metric.name, ("OPT", "NOPE"))
    with pytest.raises(ReuseError):
        build_sampler(spec, {s.id: s for s in small.systems}, small.queries)


def test_build_sampler_smooths_last(small):
    reg = {s.id: s for s in small.systems}
    ap = ApproxUtility("rank-decay", scale=4.0)
    spec = SamplerSpec("pair", small.metric.name, ("OPT", "REV-4"), epsilon=0.1, approx_utility=ap)
    q = build_sampler(spec, reg, small.queries)
    raw = optimal_pair(reg["OPT"], reg["REV-4"], small.metric, ap, small.queries)
    assert len(q) == q.universe.size
    assert q.probs.min() == pytest.approx(0.1 / q.universe.size)
    np.testing.assert_allclose(q.lookup(raw.codes), 0.9 * raw.probs + 0.1 / q.universe.size, rtol=1e-13)


def test_random_distribution_full_support(small):
    q = heuristic_sampler("uniform", small.systems, small.metric, None, small.queries)
    r = random_distribution(q, np.random.default_rng(0))
    assert np.array_equal(r.codes, q.universe) and np.all(r.probs > 0)


def test_distribution_validation():
    from ranksample.metrics import KeySpace
    ks = KeySpace(["q"], "ab")
    c = ks.encode([0, 0], [0, 1])
    with pytest.raises(InputError):
        SamplingDistribution(ks, c, np.array([0.5, 0.4]))
    with pytest.raises(InputError):
        SamplingDistribution(ks, c, np.array([1.0, 0.0]))
