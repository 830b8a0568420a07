import json
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macrodt.builders import oracle_annotate, oracle_violations, result_convert
from macrodt.corpus import (
    CorpusError,
    CorpusManifest,
    SilverGenError,
    assign_folds,
    load_corpus,
    load_predictions,
    prune_to_macro,
    save_corpus,
    silver_gen,
    write_jsonl,
)
from macrodt.document import Document, DocumentError, Unit, plain_document
from macrodt.scorers import FileScorer, LexicalScorer
from macrodt.synth import synthetic_corpus, synthetic_probabilities
from macrodt.tree import TreeError, format_tree, parse_tree, tree_from_ranks, validate
from oracles import spans

T = parse_tree


def write_lines(path, recs):
    path.write_text("".join(json.dumps(r) + "\n" for r in recs))
    return path


def test_load_minimal(tmp_path):
    p = write_lines(tmp_path / "c.jsonl", [{"id": "a", "units": [{"text": "x"}, {"text": "y"}, {"text": "z"}], "topic_boundaries": [1]}])
    c = load_corpus(p)
    (doc,) = c.documents
    assert doc.n == 3
    assert doc.topic_boundaries == {1}
    assert doc.paragraph_of == (0, 1, 2)


@pytest.mark.parametrize(
    "rec, match",
    [
        ({"id": "a", "units": [{"text": "x"}] * 3, "topic_boundaries": [5]}, "outside"),
        ({"id": "a", "units": [{"text": "x"}] * 3, "paragraph_of": [0, 2, 1]}, "monotone"),
        ({"id": "a", "units": [{"text": "x"}] * 3, "gold_tree": "(0 1)"}, "gold_tree"),
        ({"id": "a", "units": [{"text": "x"}] * 3, "gold_tree": "(0 1 2)"}, "binary"),
        ({"id": "a", "units": []}, "no units"),
        ({"id": "a", "units": [{"text": "x", "kind": "chapter"}]}, "kind"),
        ({"units": [{"text": "x"}]}, "id"),
    ],
)
def test_load_rejects(tmp_path, rec, match):
    p = write_lines(tmp_path / "c.jsonl", [{"id": "ok", "units": [{"text": "x"}]}, rec])
    with pytest.raises(CorpusError, match=match) as err:
        load_corpus(p)
    assert ":2:" in str(err.value)


def test_load_bad_json_and_duplicates(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text('{"id": "a", "units": [{"text": "x"}]}\n{not json\n')
    with pytest.raises(CorpusError, match=":2:"):
        load_corpus(p)
    write_lines(p, [{"id": "a", "units": [{"text": "x"}]}] * 2)
    with pytest.raises(CorpusError, match="duplicate"):
        load_corpus(p)
    with pytest.raises(CorpusError):
        load_corpus(p, format="xml")


def test_round_trip_byte_identical(tmp_path):
    canonical = (
        '{"id": "a", "units": [{"text": "Первый", "kind": "paragraph"}, {"text": "b", "kind": "paragraph"}, '
        '{"text": "c", "kind": "paragraph"}], "paragraph_of": [0, 1, 2], "topic_boundaries": [1], '
        '"gold_tree": "((0 1) 2)", "tier": "gold"}\n'
    )
    src = tmp_path / "in.jsonl"
    src.write_text(canonical, encoding="utf-8")
    out = tmp_path / "out.jsonl"
    save_corpus(load_corpus(src), out)
    assert out.read_bytes() == src.read_bytes()
    assert json.loads(out.read_text())["gold_tree"] == "((0 1) 2)"


def test_synthetic_round_trip(tmp_path):
    docs = synthetic_corpus(20, seed=4)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_corpus(docs, a)
    save_corpus(load_corpus(a), b)
    assert a.read_bytes() == b.read_bytes()


def test_assign_folds_sizes_and_determinism():
    c = CorpusManifest(tuple(plain_document(f"d{i}", 2) for i in range(10)))
    assert Counter(assign_folds(c, 10, 1).folds.values()) == Counter({f: 1 for f in range(10)})
    c11 = CorpusManifest(tuple(plain_document(f"d{i}", 2) for i in range(11)))
    assert sorted(Counter(assign_folds(c11, 10, 1).folds.values()).values()) == [1] * 9 + [2]
    assert assign_folds(c11, 10, 5).folds == assign_folds(c11, 10, 5).folds
    assert assign_folds(c11, 10, 5).folds != assign_folds(c11, 10, 6).folds
    with pytest.raises(CorpusError):
        assign_folds(CorpusManifest(tuple(plain_document(f"d{i}", 2) for i in range(3))), 4)
    with pytest.raises(ValueError):
        assign_folds(c, 1)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(2, 10), st.integers(0, 10**6))
def test_fold_sizes_differ_by_at_most_one(n_docs, k, seed):
    if n_docs < k:
        return
    c = CorpusManifest(tuple(plain_document(f"d{i}", 2) for i in range(n_docs)))
    sizes = Counter(assign_folds(c, k, seed).folds.values())
    assert len(sizes) == k
    assert max(sizes.values()) - min(sizes.values()) <= 1


def _fold_scorers(tmp_path, docs, k):
    paths = {}
    for f in range(k):
        paths[f] = write_lines(tmp_path / f"p{f}.jsonl", synthetic_probabilities(docs, seed=100 + f))
    return paths


def test_silver_gen_uses_held_out_scorer(tmp_path):
    docs = synthetic_corpus(8, seed=2)
    paths = _fold_scorers(tmp_path, docs, 2)
    used = {}

    class Recording(FileScorer):
        def __init__(self, path, fold):
            super().__init__(path)
            self.fold = fold

        def _seg(self, doc):
            used[doc.id] = self.fold
            return super()._seg(doc)

    corpus = assign_folds(CorpusManifest(tuple(docs)), 2, seed=3)
    out = silver_gen(corpus, lambda f: Recording(paths[f], f), k=2)
    assert all(d.silver_tree is not None and d.tier == "silver" for d in out)
    assert used == corpus.folds
    for d in out:
        assert d.silver_tree == oracle_annotate(d, FileScorer(paths[corpus.folds[d.id]]))
        assert oracle_violations(d.silver_tree, d.topic_boundaries) == []


def test_silver_gen_without_topics_equals_result_convert():
    docs = [d.with_(topic_boundaries=frozenset()) for d in synthetic_corpus(6, seed=9)]
    out = silver_gen(CorpusManifest(tuple(docs)), lambda f: LexicalScorer(), k=3, seed=1)
    for d in out:
        assert d.silver_tree == result_convert(d, LexicalScorer())


def test_silver_gen_deterministic(tmp_path):
    docs = synthetic_corpus(12, seed=5)
    runs = []
    for i in range(2):
        out = silver_gen(CorpusManifest(tuple(docs)), lambda f: LexicalScorer(), k=4, seed=8, jobs=2 * i + 1)
        path = tmp_path / f"run{i}.jsonl"
        save_corpus(out, path)
        runs.append(path.read_bytes())
    assert runs[0] == runs[1]


def test_silver_gen_factory_failure_names_fold():
    docs = synthetic_corpus(6, seed=1)

    def factory(f):
        if f == 2:
            raise RuntimeError("model missing")
        return LexicalScorer()

    with pytest.raises(SilverGenError, match="fold 2") as err:
        silver_gen(CorpusManifest(tuple(docs)), factory, k=3)
    assert err.value.fold == 2


def test_prune_examples():
    assert prune_to_macro(T("((0 1) (2 3))"), [0, 0, 1, 1]) == T("(0 1)")
    assert prune_to_macro(T("(((0 1) 2) 3)"), [0, 0, 1, 1]) == T("(0 1)")
    assert prune_to_macro(T("(0 ((1 2) 3))"), [0, 0, 1, 1]) == T("(0 1)")
    t = T("((0 (1 2)) (3 4))")
    assert prune_to_macro(t, [0, 1, 2, 3, 4]) == t


def test_prune_keeps_bracketing_outside_straddled_paragraph():
    # paragraph 1 (units 2, 3) is split across the right subtree
    assert prune_to_macro(T("((0 1) (2 (3 4)))"), [0, 0, 1, 1, 2]) == T("(0 (1 2))")
    # paragraph labels need not start at zero, only be contiguous
    assert prune_to_macro(T("((0 1) (2 (3 4)))"), [7, 7, 9, 9, 12]) == T("(0 (1 2))")


def test_prune_rejects_non_contiguous():
    with pytest.raises(TreeError, match="contiguous"):
        prune_to_macro(T("((0 1) 2)"), [0, 1, 0])
    with pytest.raises(TreeError):
        prune_to_macro(T("((0 1) 2)"), [0, 1])


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_prune_properties(data):
    n = data.draw(st.integers(1, 12))
    perm = data.draw(st.permutations(range(n - 1)))
    tree = tree_from_ranks(n, dict(enumerate(perm)))
    cuts = sorted(data.draw(st.sets(st.integers(0, max(n - 2, 0)), max_size=max(n - 1, 0)))) if n > 1 else []
    para, p = [], 0
    for i in range(n):
        para.append(p)
        if i in cuts:
            p += 1
    out = prune_to_macro(tree, para)
    m = len(set(para))
    assert validate(out, m) == []
    blocks = {}
    for i, q in enumerate(para):
        blocks.setdefault(q, [i, i])[1] = i
    if all(s == e or (s, e) in spans(tree) for s, e in blocks.values()):
        # every paragraph is a subtree: pruning just relabels multi-paragraph spans
        expected = {(para[s], para[e]) for s, e in spans(tree) if para[s] != para[e]}
        assert spans(out) == expected


def test_load_predictions(tmp_path):
    p = write_jsonl(tmp_path / "p.jsonl", [{"id": "a", "pred_tree": "(0 1)"}]) or tmp_path / "p.jsonl"
    assert load_predictions(p) == {"a": T("(0 1)")}
    (tmp_path / "bad.jsonl").write_text('{"id": "a"}\n')
    with pytest.raises(CorpusError, match=":1:"):
        load_predictions(tmp_path / "bad.jsonl")


def test_document_invariants():
    with pytest.raises(DocumentError):
        Document("x", (Unit("a"),), gold_tree=T("(0 1)"))
    with pytest.raises(DocumentError):
        Document("x", (Unit("a"), Unit("b")), tier="bronze")
    d = Document("x", (Unit("a"), Unit("b"), Unit("c"), Unit("d")), frozenset({0, 2}))
    assert d.topic_blocks() == [(0, 0), (1, 2), (3, 3)]
    assert format_tree(oracle_annotate(d, LexicalScorer())).count("(") == 3
