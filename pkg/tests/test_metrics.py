import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ranksample.errors import CoverageError, InputError
from ranksample.metrics import (
    DenseOracle,
    KeySpace,
    MetricSpec,
    RankedList,
    System,
    TableOracle,
    exact_utility,
    parse_metric,
    part_weight,
    target_distribution,
)


def test_table_weights():
    assert part_weight(MetricSpec("prec", k=10), 11, 100) == 0.0
    assert part_weight(MetricSpec("prec", k=10), 10, 100) == 0.1
    assert part_weight(MetricSpec("dcg"), 1, 5) == 1.0
    assert part_weight(MetricSpec("dcg"), 3, 5) == 0.5
    assert part_weight(MetricSpec("rbp", p=0.5), 3, 10) == 0.125
    assert part_weight(MetricSpec("dcg", log_base=math.e), 2, 5) == pytest.approx(1 / math.log(3))


def test_rank_out_of_range():
    with pytest.raises(InputError):
        part_weight(MetricSpec("dcg"), 6, 5)
    with pytest.raises(InputError):
        part_weight(MetricSpec("swaps"), (2, 6), 5)


def test_pair_weights():
    m = MetricSpec("wswaps", k=3)
    # ordered pairs above the cutoff only, 1/(depth * r1 * r2)
    assert part_weight(m, (1, 2), 5) == pytest.approx(1 / 6)
    assert part_weight(m, (2, 3), 5) == pytest.approx(1 / 18)
    assert part_weight(m, (2, 4), 5) == 0.0
    assert part_weight(m, (3, 2), 5) == 0.0


def test_prec_target_support():
    docs = [f"d{i:03d}" for i in range(100)]
    s = System.from_lists("S", {"q": docs})
    t = target_distribution(s, MetricSpec("prec", k=10), ["q"])
    assert len(t) == 10
    assert set(t.entries) == {("q", (d,)) for d in docs[:10]}
    assert all(w == 0.1 for w in t.weights)


def test_dcg_support_size():
    lists = {f"q{j:02d}": [f"d{i:03d}" for i in range(100)] for j in range(50)}
    t = target_distribution(System.from_lists("S", lists), parse_metric("dcg@100"), sorted(lists))
    assert len(t) == 5000


def test_identical_systems_identical_targets():
    lists = {"q": ["a", "b", "c"]}
    m = MetricSpec("dcg")
    a = target_distribution(System.from_lists("A", lists), m, ["q"])
    b = target_distribution(System.from_lists("B", lists), m, ["q"])
    assert a.same_entries(b)


def test_exact_utility_small_cases():
    s = System.from_lists("S", {"q": ["a", "b"]})
    o = TableOracle({"q": {"a": 1.0, "b": 0.0}})
    assert exact_utility(s, o, MetricSpec("dcg"), ["q"]) == 1.0
    s = System.from_lists("S", {"q": ["a", "b", "c", "d"]})
    o = TableOracle({"q": {"a": 1, "b": 1, "c": 0}})
    assert exact_utility(s, o, MetricSpec("prec", k=2), ["q"]) == 1.0


def test_toy_frozen_values(toy):
    oracle, s1, s2, X = toy
    # hand-summed: sum_r u(r) / log2(1 + r), averaged over the two queries
    assert exact_utility(s1, oracle, MetricSpec("dcg"), X) == pytest.approx(4.026944590681547, abs=1e-14)
    assert exact_utility(s2, oracle, MetricSpec("dcg"), X) == pytest.approx(4.0773243839286435, abs=1e-14)
    # q1 has 3 inverted pairs, q2 one; each pair weighs 1/4
    table = {q: {d: float(oracle.doc_utility(q, d)) for d in "abcd"} for q in X}
    assert exact_utility(s1, TableOracle(table), MetricSpec("swaps"), X) == 0.5


def test_coverage_error(toy):
    _, s1, _, _ = toy
    with pytest.raises(CoverageError):
        target_distribution(s1, MetricSpec("dcg"), ["q1", "q9"])


def test_short_lists_and_cutoff():
    s = System.from_lists("S", {"q": ["a", "b"]})
    t = target_distribution(s, MetricSpec("prec", k=5), ["q"])
    assert t.total() == pytest.approx(0.4)
    rl = RankedList("q", ("a", "b", "c"), depth_cutoff=2)
    t = target_distribution(System("S", {"q": rl}), MetricSpec("dcg"), ["q"])
    assert len(t) == 2


def test_brute_force_on_synth(small):
    m = small.metric
    for s in small.systems:
        total = 0.0
        for q in small.queries:
            docs = s.ranking(q).docs
            total += sum(small.oracle.doc_utility(q, d) / math.log2(1 + r)
                         for r, d in enumerate(docs, start=1))
        assert exact_utility(s, small.oracle, m, small.queries) == pytest.approx(
            total / len(small.queries), abs=1e-10)


rankings = st.lists(st.sampled_from("abcdefgh"), min_size=1, max_size=8, unique=True)
metrics = st.sampled_from(["prec@3", "dcg", "dcg@4", "gain@5", "mae", "mse", "rbp@0.7", "swaps", "wswaps@5"])


@given(st.lists(rankings, min_size=1, max_size=4), metrics)
@settings(max_examples=80)
def test_query_norms_match(lists, name):
    m = parse_metric(name)
    queries = [f"q{i}" for i in range(len(lists))]
    s = System.from_lists("S", dict(zip(queries, lists)))
    t = target_distribution(s, m, queries)
    assert np.all(t.weights > 0)
    qi, _, _ = t.space.split(t.codes)
    for q in queries:
        mine = t.weights[qi == t.space.query_index(q)]
        assert math.fsum(mine) == pytest.approx(t.query_norms[q] / len(queries), rel=1e-12)


@given(st.lists(rankings, min_size=2, max_size=4), st.randoms(use_true_random=False))
@settings(max_examples=40)
def test_exact_utility_order_invariant(lists, rnd):
    queries = [f"q{i}" for i in range(len(lists))]
    s = System.from_lists("S", dict(zip(queries, lists)))
    o = TableOracle({q: {d: float((ord(d) * (i + 3)) % 4) for d in "abcdefgh"} for i, q in enumerate(queries)})
    shuffled = list(queries)
    rnd.shuffle(shuffled)
    m = MetricSpec("dcg")
    assert exact_utility(s, o, m, queries) == exact_utility(s, o, m, shuffled)


@given(st.lists(st.tuples(st.sampled_from(["q1", "q2", "x"]),
                          st.sampled_from("abcd"), st.sampled_from("-abcd")), min_size=2, max_size=20))
def test_code_order_is_lexicographic(keys):
    ks = KeySpace(["q1", "q2", "x"], "abcd")
    parts = [(q, (a,) if b == "-" else (a, b)) for q, a, b in keys if a != b]
    codes = ks.encode_keys(parts)
    assert np.all(codes >= 0)
    by_code = [p for _, p in sorted(zip(codes.tolist(), parts))]
    assert by_code == sorted(parts)
    assert ks.decode(codes) == parts


@pytest.mark.parametrize("text,name", [
    ("dcg@100", "dcg@100"), ("prec@10", "prec@10"), ("rbp@0.8", "rbp@0.8"),
    ("DCG@200,M=4", "dcg@200,M=4.0"), ("swaps@10", "swaps@10"), ("dcg,base=10", "dcg,base=10.0"),
])
def test_parse_metric(text, name):
    m = parse_metric(text)
    assert m.name == name
    assert parse_metric(m.name) == m


@pytest.mark.parametrize("bad", ["", "ndcg@10", "prec", "rbp@1.5", "dcg@x", "dcg@10,q=1", "prec@5,M=3"])
def test_parse_metric_rejects(bad):
    with pytest.raises(InputError):
        parse_metric(bad)


def test_ranked_list_validation():
    with pytest.raises(InputError):
        RankedList("q", ("a", "a"))
    with pytest.raises(InputError):
        RankedList("q", ())


def test_dense_oracle_pairs_and_bounds():
    o = DenseOracle(["q"], ["a", "b"], [[2.0, 3.0]], max_utility=3.0)
    assert o.utility("q", ("a", "b")) == 1.0
    assert o.utility("q", ("b", "a")) == 0.0
    with pytest.raises(Exception):
        DenseOracle(["q"], ["a"], [[5.0]], max_utility=3.0)


def test_table_oracle_assumed_flag():
    o = TableOracle({"q": {"a": 1.0}})
    assert o.lookup("q", ("a",)) == (1.0, False)
    assert o.lookup("q", ("z",)) == (0.0, True)
