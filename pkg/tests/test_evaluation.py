import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macrodt.evaluation import (
    EvalConfig,
    EvalError,
    corpus_eval,
    layer_bucket,
    node_layers,
    shape_distribution,
    span_accuracy,
)
from macrodt.tree import all_trees, internal_nodes, left_comb, parse_tree, tree_from_ranks
from oracles import spans

T = parse_tree


def random_tree(n, perm):
    return tree_from_ranks(n, dict(enumerate(perm)))


trees = st.integers(1, 10).flatmap(
    lambda n: st.tuples(st.permutations(range(n - 1)), st.permutations(range(n - 1))).map(
        lambda pq: (random_tree(n, pq[0]), random_tree(n, pq[1]))
    )
)


def test_self_evaluation():
    t = T("((0 1) ((2 3) 4))")
    assert span_accuracy(t, t) == (4, 4)


def test_worked_example():
    pred, gold = T("((0 1) (2 3))"), T("(((0 1) 2) 3)")
    # hand enumeration: pred {0-1, 2-3, 0-3}, gold {0-1, 0-2, 0-3}
    assert spans(pred) & spans(gold) == {(0, 1), (0, 3)}
    assert span_accuracy(pred, gold) == (2, 3)
    assert span_accuracy(pred, gold, include_root=False) == (1, 2)


def test_two_leaves_always_match():
    assert span_accuracy(T("(0 1)"), T("(0 1)")) == (1, 1)
    assert span_accuracy(T("0"), T("0")) == (0, 0)


def test_leaf_count_mismatch():
    with pytest.raises(EvalError):
        span_accuracy(T("(0 1)"), T("((0 1) 2)"))


@settings(max_examples=200, deadline=None)
@given(trees)
def test_symmetry_and_identity(pair):
    a, b = pair
    n = len(spans(a)) + 1
    assert span_accuracy(a, b) == span_accuracy(b, a)
    m, t = span_accuracy(a, b)
    assert t == n - 1
    assert m == len(spans(a) & spans(b))
    assert (m == t) == (a == b)


def test_layer_bucket_examples():
    t = T("((0 1) 2)")
    assert layer_bucket(t, t) == "top2"
    assert layer_bucket(t.left, t) == "top2"
    comb = left_comb(6)
    node01 = [x for x in internal_nodes(comb) if x.span == (0, 1)][0]
    assert layer_bucket(node01, comb) == "bottom2"
    with pytest.raises(EvalError):
        layer_bucket(T("(7 8)"), t)


def test_layer_middle_exists_in_deep_tree():
    comb = left_comb(8)
    layers = node_layers(comb)
    # depths 0..6 for spans (0,7)..(0,1); heights 7..1
    assert layers[(0, 7)] == layers[(0, 6)] == "top2"
    assert layers[(0, 5)] == layers[(0, 4)] == layers[(0, 3)] == "middle"
    assert layers[(0, 2)] == layers[(0, 1)] == "bottom2"


@settings(max_examples=100, deadline=None)
@given(trees)
def test_layer_partition(pair):
    t, _ = pair
    layers = node_layers(t)
    assert set(layers) == spans(t)
    assert set(layers.values()) <= {"top2", "middle", "bottom2"}


def test_shape_distribution():
    assert shape_distribution([T("(0 1)"), T("(0 1)")]) == {2: 1}
    assert shape_distribution([T("((0 1) 2)"), T("(0 (1 2))")]) == {3: 2}
    assert shape_distribution(all_trees(0, 3)) == {4: 5}
    assert shape_distribution([]) == {}


def test_corpus_micro_average():
    pred, gold = T("((0 1) (2 3))"), T("(((0 1) 2) 3)")
    full = T("((0 1) ((2 3) 4))")
    report = corpus_eval([("a", pred, gold), ("b", full, full)])
    assert (report.matched, report.total) == (6, 7)
    assert report.span_accuracy == 6 / 7
    # mean of per-document accuracies would be (2/3 + 1) / 2 = 5/6
    assert report.span_accuracy != pytest.approx(5 / 6)


def test_corpus_identical_trees_everywhere_one():
    pairs = [(f"d{n}", left_comb(n), left_comb(n)) for n in range(2, 13)]
    report = corpus_eval(pairs)
    assert report.span_accuracy == 1.0
    for bucket in (report.by_layer, report.by_length):
        for m, t in bucket.values():
            assert m == t


def test_length_buckets_route_boundaries():
    pairs = [(f"d{n}", left_comb(n), left_comb(n)) for n in range(2, 13)]
    report = corpus_eval(pairs)
    per_bucket_docs = {"2-4": [2, 3, 4], "5-7": [5, 6, 7], "8-10": [8, 9, 10], ">10": [11, 12]}
    for label, ns in per_bucket_docs.items():
        assert report.by_length[label] == (sum(n - 1 for n in ns),) * 2
    assert report.by_length["<2"] == (0, 0)
    cfg = EvalConfig()
    assert cfg.length_bucket(4) == "2-4" and cfg.length_bucket(5) == "5-7"


def test_length_from_explicit_paragraph_counts():
    report = corpus_eval([("a", left_comb(3), left_comb(3))], lengths={"a": 9})
    assert report.by_length["8-10"] == (2, 2)


def test_bucket_totals_sum_to_total():
    pairs = [(f"d{i}", left_comb(n), T("(0 (1 (2 (3 (4 (5 6))))))") if n == 7 else left_comb(n)) for i, n in enumerate([7, 3, 9])]
    for include_root in (True, False):
        report = corpus_eval(pairs, EvalConfig(include_root=include_root))
        assert sum(t for _, t in report.by_layer.values()) == report.total
        assert sum(t for _, t in report.by_length.values()) == report.total
        assert sum(m for m, _ in report.by_layer.values()) == report.matched


def test_corpus_errors():
    with pytest.raises(EvalError):
        corpus_eval([])
    with pytest.raises(EvalError, match="'bad'"):
        corpus_eval([("ok", T("(0 1)"), T("(0 1)")), ("bad", T("(0 1)"), T("((0 1) 2)"))])


def test_bare_pairs_and_outputs():
    report = corpus_eval([(T("(0 1)"), T("(0 1)"))])
    assert report.documents == 1
    data = json.loads(report.to_json())
    assert data["span_accuracy"] == 1.0
    assert set(data["by_layer"]) == {"top2", "middle", "bottom2"}
    table = report.to_table()
    assert "1.0000" in table and "top2" in table
    csv_text = report.to_csv()
    assert csv_text.splitlines()[0] == "breakdown,bucket,matched,total,accuracy"


def test_bad_edges():
    with pytest.raises(ValueError):
        EvalConfig(length_edges=(5, 2))
