"""Span accuracy and its breakdowns by tree layer, document length and shape."""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .tree import Node, Tree, internal_nodes, leaves, shape_signature

LAYER_BUCKETS = ("top2", "middle", "bottom2")
LAYER_DEFINITION = (
    "depth(root)=0, height(leaf)=0; top2: depth<=1; bottom2: height<=2; "
    "middle: otherwise; top2 wins when both apply"
)


class EvalError(ValueError):
    pass


def internal_spans(tree: Tree, include_root: bool = True) -> set[tuple[int, int]]:
    spans = {node.span for node in internal_nodes(tree)}
    if not include_root and isinstance(tree, Node):
        spans.discard(tree.span)
    return spans


def span_accuracy(pred: Tree, gold: Tree, include_root: bool = True) -> tuple[int, int]:
    """Return ``(matched, total)``: gold internal spans also present in ``pred``."""
    n_pred, n_gold = len(leaves(pred)), len(leaves(gold))
    if n_pred != n_gold:
        raise EvalError(f"leaf count mismatch: predicted {n_pred}, gold {n_gold}")
    gold_spans = internal_spans(gold, include_root)
    matched = len(internal_spans(pred, include_root) & gold_spans)
    return matched, len(gold_spans)


def node_layers(tree: Tree) -> dict[tuple[int, int], str]:
    """Layer bucket of every internal node, keyed by span."""
    heights: dict[tuple[int, int], int] = {}
    order = list(internal_nodes(tree))
    for node in reversed(order):
        h = 0
        for child in (node.left, node.right):
            if isinstance(child, Node):
                h = max(h, heights[child.span])
        heights[node.span] = h + 1

    out = {}
    stack = [(tree, 0)] if isinstance(tree, Node) else []
    while stack:
        node, depth = stack.pop()
        if depth <= 1:
            out[node.span] = "top2"
        elif heights[node.span] <= 2:
            out[node.span] = "bottom2"
        else:
            out[node.span] = "middle"
        for child in (node.left, node.right):
            if isinstance(child, Node):
                stack.append((child, depth + 1))
    return out


def layer_bucket(node: Node, tree: Tree) -> str:
    """Layer bucket of internal ``node`` within ``tree``."""
    if not isinstance(node, Node):
        raise EvalError("layer buckets are defined for internal nodes only")
    try:
        return node_layers(tree)[node.span]
    except KeyError:
        raise EvalError(f"node {node.span} is not in the tree") from None


def shape_distribution(trees: Iterable[Tree]) -> dict[int, int]:
    """Number of distinct tree shapes per leaf count."""
    shapes: dict[int, set[str]] = defaultdict(set)
    for t in trees:
        shapes[len(leaves(t))].add(shape_signature(t))
    return {n: len(s) for n, s in sorted(shapes.items())}


@dataclass(frozen=True)
class EvalConfig:
    include_root: bool = True
    # lower edges of the length buckets: [2,5) [5,8) [8,11) [11,inf)
    length_edges: tuple[int, ...] = (2, 5, 8, 11)

    def __post_init__(self) -> None:
        edges = tuple(self.length_edges)
        if not edges or any(a >= b for a, b in zip(edges, edges[1:])):
            raise ValueError(f"length edges must be strictly increasing, got {edges}")
        object.__setattr__(self, "length_edges", edges)

    def length_labels(self) -> list[str]:
        edges = self.length_edges
        labels = [f"<{edges[0]}"]
        for lo, hi in zip(edges, edges[1:]):
            labels.append(f"{lo}" if hi - lo == 1 else f"{lo}-{hi - 1}")
        labels.append(f">{edges[-1] - 1}")
        return labels

    def length_bucket(self, length: int) -> str:
        labels = self.length_labels()
        idx = sum(1 for e in self.length_edges if length >= e)
        return labels[idx]


@dataclass
class EvalReport:
    matched: int
    total: int
    by_layer: dict[str, tuple[int, int]] = field(default_factory=dict)
    by_length: dict[str, tuple[int, int]] = field(default_factory=dict)
    shape_counts: dict[int, int] = field(default_factory=dict)
    documents: int = 0
    include_root: bool = True

    @property
    def span_accuracy(self) -> float:
        return self.matched / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        def rows(d):
            return {
                k: {"matched": m, "total": t, "accuracy": round(m / t, 6) if t else None}
                for k, (m, t) in d.items()
            }

        return {
            "span_accuracy": round(self.span_accuracy, 6),
            "matched": self.matched,
            "total": self.total,
            "documents": self.documents,
            "include_root": self.include_root,
            "layer_definition": LAYER_DEFINITION,
            "by_layer": rows(self.by_layer),
            "by_length": rows(self.by_length),
            "shape_counts": {str(k): v for k, v in self.shape_counts.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def to_table(self, by_layer: bool = True, by_length: bool = True) -> str:
        lines = [f"{'bucket':<12} {'matched':>8} {'total':>8} {'accuracy':>9}"]

        def row(name, m, t):
            acc = f"{m / t:.4f}" if t else "-"
            lines.append(f"{name:<12} {m:>8d} {t:>8d} {acc:>9}")

        row("all", self.matched, self.total)
        if by_layer:
            lines.append(f"# layers: {LAYER_DEFINITION}")
            for k in LAYER_BUCKETS:
                row(k, *self.by_layer.get(k, (0, 0)))
        if by_length:
            lines.append("# length: paragraphs per document")
            for k, (m, t) in self.by_length.items():
                row(k, m, t)
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        """Bar-chart series: one row per (breakdown, bucket)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["breakdown", "bucket", "matched", "total", "accuracy"])
        w.writerow(["all", "all", self.matched, self.total, f"{self.span_accuracy:.6f}"])
        for name, d in (("layer", self.by_layer), ("length", self.by_length)):
            for k, (m, t) in d.items():
                w.writerow([name, k, m, t, f"{m / t:.6f}" if t else ""])
        return buf.getvalue()


def corpus_eval(
    pairs: Sequence[tuple[str, Tree, Tree]] | Sequence[tuple[Tree, Tree]],
    config: EvalConfig = EvalConfig(),
    lengths: Optional[Mapping[str, int]] = None,
) -> EvalReport:
    """Micro-averaged span accuracy over ``(doc_id, pred, gold)`` triples.

    Bare ``(pred, gold)`` pairs get positional ids.  Document length for the
    length buckets defaults to the gold leaf count; pass ``lengths`` to use
    paragraph counts from elsewhere.  Shape counts describe the predictions.
    """
    if not pairs:
        raise EvalError("nothing to evaluate")
    matched = total = 0
    by_layer = {k: [0, 0] for k in LAYER_BUCKETS}
    by_length = {k: [0, 0] for k in config.length_labels()}
    preds = []
    for i, item in enumerate(pairs):
        if len(item) == 3:
            doc_id, pred, gold = item
        else:
            doc_id, (pred, gold) = str(i), item
        try:
            m, t = span_accuracy(pred, gold, config.include_root)
        except EvalError as e:
            raise EvalError(f"document {doc_id!r}: {e}") from None
        matched += m
        total += t
        preds.append(pred)

        pred_spans = internal_spans(pred, config.include_root)
        for span, bucket in node_layers(gold).items():
            if not config.include_root and isinstance(gold, Node) and span == gold.span:
                continue
            by_layer[bucket][1] += 1
            by_layer[bucket][0] += span in pred_spans

        length = lengths[doc_id] if lengths is not None else len(leaves(gold))
        cell = by_length[config.length_bucket(length)]
        cell[0] += m
        cell[1] += t

    return EvalReport(
        matched=matched,
        total=total,
        by_layer={k: tuple(v) for k, v in by_layer.items()},
        by_length={k: tuple(v) for k, v in by_length.items()},
        shape_counts=shape_distribution(preds),
        documents=len(preds),
        include_root=config.include_root,
    )
