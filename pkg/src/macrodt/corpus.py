"""Corpus I/O, fold assignment, silver-tree generation and macro-level pruning."""

from __future__ import annotations

import json
import os
import random
import tempfile
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterator, Mapping, Optional, Sequence

from .builders import oracle_annotate
from .document import Document, DocumentError, Unit
from .scorers import Scorer
from .tree import Leaf, Node, Tree, TreeError, format_tree, leaves, parse_tree


class CorpusError(ValueError):
    """Bad input data: unparseable line or an invariant violation."""


class SilverGenError(RuntimeError):
    def __init__(self, fold: int, message: str):
        super().__init__(f"fold {fold}: {message}")
        self.fold = fold


@dataclass(frozen=True)
class CorpusManifest:
    documents: tuple[Document, ...]
    folds: Optional[Mapping[str, int]] = None
    provenance: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "documents", tuple(self.documents))
        ids = [d.id for d in self.documents]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise CorpusError(f"duplicate document ids: {dupes}")
        if self.folds is not None:
            missing = set(ids) - set(self.folds)
            if missing:
                raise CorpusError(f"fold map misses documents {sorted(missing)}")

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)


def document_from_record(rec: dict) -> Document:
    if not isinstance(rec, dict):
        raise CorpusError("record is not a JSON object")
    try:
        doc_id = str(rec["id"])
        units = tuple(
            Unit(u.get("text", ""), u.get("kind", "paragraph")) if isinstance(u, dict) else Unit(str(u))
            for u in rec["units"]
        )
    except (KeyError, TypeError, AttributeError) as e:
        raise CorpusError(f"missing or malformed field: {e}") from None
    except DocumentError as e:
        raise CorpusError(f"document {rec.get('id')!r}: {e}") from None
    trees = {}
    for name in ("gold_tree", "silver_tree"):
        text = rec.get(name)
        if text is not None:
            try:
                trees[name] = parse_tree(text)
            except TreeError as e:
                raise CorpusError(f"document {doc_id!r}: {name}: {e}") from None
    try:
        return Document(
            id=doc_id,
            units=units,
            topic_boundaries=frozenset(int(b) for b in rec.get("topic_boundaries", ())),
            paragraph_of=tuple(int(p) for p in rec.get("paragraph_of", ())),
            gold_tree=trees.get("gold_tree"),
            silver_tree=trees.get("silver_tree"),
            tier=rec.get("tier"),
            fold=rec.get("fold"),
        )
    except (DocumentError, TypeError, ValueError) as e:
        raise CorpusError(str(e)) from None


def document_to_record(doc: Document) -> dict:
    rec = {
        "id": doc.id,
        "units": [{"text": u.text, "kind": u.kind} for u in doc.units],
        "paragraph_of": list(doc.paragraph_of),
        "topic_boundaries": sorted(doc.topic_boundaries),
    }
    if doc.gold_tree is not None:
        rec["gold_tree"] = format_tree(doc.gold_tree)
    if doc.silver_tree is not None:
        rec["silver_tree"] = format_tree(doc.silver_tree)
    if doc.tier is not None:
        rec["tier"] = doc.tier
    if doc.fold is not None:
        rec["fold"] = doc.fold
    return rec


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, ensure_ascii=False)


def read_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, record)``, skipping blank lines."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except ValueError as e:
                raise CorpusError(f"{path}:{lineno}: invalid JSON: {e}") from None


def load_corpus(path: str | Path, format: str = "jsonl") -> CorpusManifest:
    if format != "jsonl":
        raise CorpusError(f"unsupported corpus format {format!r}")
    docs = []
    seen: dict[str, int] = {}
    for lineno, rec in read_jsonl(path):
        try:
            doc = document_from_record(rec)
        except CorpusError as e:
            raise CorpusError(f"{path}:{lineno}: {e}") from None
        if doc.id in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate id {doc.id!r} (first on line {seen[doc.id]})")
        seen[doc.id] = lineno
        docs.append(doc)
    folds = None
    if docs and all(d.fold is not None for d in docs):
        folds = {d.id: d.fold for d in docs}
    return CorpusManifest(tuple(docs), folds, provenance=str(path))


@contextmanager
def atomic_writer(path: str | Path):
    """Write to a temporary file next to ``path`` and rename it into place on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def write_jsonl(path: str | Path, records) -> None:
    with atomic_writer(path) as fh:
        for rec in records:
            fh.write(dumps_record(rec) + "\n")


def save_corpus(corpus: CorpusManifest | Sequence[Document], path: str | Path) -> None:
    docs = corpus.documents if isinstance(corpus, CorpusManifest) else corpus
    write_jsonl(path, (document_to_record(d) for d in docs))


def assign_folds(corpus: CorpusManifest, k: int, seed: int = 0) -> CorpusManifest:
    """Deal shuffled documents round-robin into ``k`` folds."""
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    if len(corpus) < k:
        raise CorpusError(f"{len(corpus)} documents cannot fill {k} folds")
    ids = [d.id for d in corpus]
    random.Random(seed).shuffle(ids)
    folds = {doc_id: i % k for i, doc_id in enumerate(ids)}
    docs = tuple(d.with_(fold=folds[d.id]) for d in corpus)
    return replace(corpus, documents=docs, folds=folds)


def silver_gen(
    corpus: CorpusManifest,
    scorer_factory: Callable[[int], Scorer],
    k: int = 10,
    seed: int = 0,
    jobs: int = 1,
) -> CorpusManifest:
    """Oracle-annotate every document with the scorer held out for its fold.

    ``scorer_factory(f)`` must return a scorer that never saw fold ``f`` in
    training.  Folds are assigned with ``seed`` unless the corpus already
    carries a fold map.  Each fold gets its own scorer, so folds may run in
    parallel.
    """
    if corpus.folds is None:
        corpus = assign_folds(corpus, k, seed)
    folds = corpus.folds
    k = max(folds.values()) + 1
    members: dict[int, list[Document]] = {f: [] for f in range(k)}
    for d in corpus:
        members[folds[d.id]].append(d)

    def run(fold: int) -> dict[str, Tree]:
        try:
            scorer = scorer_factory(fold)
        except Exception as e:
            raise SilverGenError(fold, f"cannot create scorer: {e}") from e
        out = {}
        try:
            for d in members[fold]:
                try:
                    out[d.id] = oracle_annotate(d, scorer)
                except Exception as e:
                    raise SilverGenError(fold, f"document {d.id!r}: {e}") from e
        finally:
            scorer.close()
        return out

    silver: dict[str, Tree] = {}
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            for part in pool.map(run, range(k)):
                silver.update(part)
    else:
        for f in range(k):
            silver.update(run(f))

    docs = tuple(
        d.with_(silver_tree=silver[d.id], tier="silver", fold=folds[d.id]) for d in corpus
    )
    return CorpusManifest(docs, dict(folds), corpus.provenance)


def prune_to_macro(tree: Tree, paragraph_of: Sequence[int]) -> Tree:
    """Collapse a tree over EDUs into a tree over paragraphs.

    Subtrees inside one paragraph become a single leaf.  When a paragraph's
    EDUs straddle a node, its pieces are cut out of both children and the
    paragraph is reattached left-branching at that node; all other
    bracketing is kept.  Output leaves are paragraphs numbered in order.
    """
    n = len(leaves(tree))
    if len(paragraph_of) != n:
        raise TreeError(f"paragraph map covers {len(paragraph_of)} units, tree has {n} leaves")
    order: list = []
    for p in paragraph_of:
        if not order or order[-1] != p:
            if p in order:
                raise TreeError(f"paragraph {p!r} is not contiguous")
            order.append(p)
    index = {p: i for i, p in enumerate(order)}
    para = [index[p] for p in paragraph_of]

    pruned = _relabel(tree, para)
    while True:
        seen: dict[int, int] = {}
        for leaf in _leaf_labels(pruned):
            seen[leaf] = seen.get(leaf, 0) + 1
        split = [p for p, c in seen.items() if c > 1]
        if not split:
            return pruned
        pruned = _join_paragraph(pruned, split[0])


def _relabel(tree: Tree, para: list[int]) -> Tree:
    if isinstance(tree, Leaf):
        return Leaf(para[tree.index])
    left, right = _relabel(tree.left, para), _relabel(tree.right, para)
    if isinstance(left, Leaf) and isinstance(right, Leaf) and left.index == right.index:
        return left
    return Node(left, right)


def _leaf_labels(tree: Tree) -> list[int]:
    if isinstance(tree, Leaf):
        return [tree.index]
    return _leaf_labels(tree.left) + _leaf_labels(tree.right)


def _join_paragraph(tree: Tree, p: int) -> Tree:
    """Merge the pieces of paragraph ``p`` at their lowest common ancestor."""
    node = tree
    path = []
    while True:
        assert isinstance(node, Node)
        in_left = p in _leaf_labels(node.left)
        in_right = p in _leaf_labels(node.right)
        if in_left and in_right:
            break
        path.append("L" if in_left else "R")
        node = node.left if in_left else node.right

    rest_left = _drop(node.left, p)
    rest_right = _drop(node.right, p)
    joined: Tree = Leaf(p) if rest_left is None else Node(rest_left, Leaf(p))
    if rest_right is not None:
        joined = Node(joined, rest_right)
    return _replace_at(tree, path, joined)


def _drop(tree: Tree, p: int) -> Optional[Tree]:
    if isinstance(tree, Leaf):
        return None if tree.index == p else tree
    left, right = _drop(tree.left, p), _drop(tree.right, p)
    if left is None:
        return right
    if right is None:
        return left
    return Node(left, right)


def _replace_at(tree: Tree, path: list[str], new: Tree) -> Tree:
    if not path:
        return new
    assert isinstance(tree, Node)
    if path[0] == "L":
        return Node(_replace_at(tree.left, path[1:], new), tree.right)
    return Node(tree.left, _replace_at(tree.right, path[1:], new))


def load_predictions(path: str | Path, field: str = "pred_tree") -> dict[str, Tree]:
    preds = {}
    for lineno, rec in read_jsonl(path):
        try:
            preds[str(rec["id"])] = parse_tree(rec[field])
        except (KeyError, TypeError) as e:
            raise CorpusError(f"{path}:{lineno}: missing field {e}") from None
        except TreeError as e:
            raise CorpusError(f"{path}:{lineno}: {e}") from None
    return preds
