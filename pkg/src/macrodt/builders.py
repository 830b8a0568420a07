"""Tree builders driven by topic-segmentation signals.

* :func:`result_convert` - split top-down by descending segmentation probability.
* :func:`oracle_annotate` - the same, but gold topic boundaries always split first.
* :func:`shift_reduce` - a shift/reduce loop where coherent means reduce.
* :func:`blink_decode` - pointer decoding that interleaves bottom-up merges and
  top-down splits, with single-direction ablations.

Each builder ends by assigning a total order to the boundaries, and the tree
is the one :func:`~macrodt.tree.tree_from_ranks` induces from that order.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Literal, Optional

from .document import Document
from .scorers import ActionDistribution, Label, Scorer
from .tree import Leaf, Node, Tree, TreeError, split_boundary, tree_from_ranks

log = logging.getLogger(__name__)

METHODS = ("result-convert", "oracle", "shift-reduce", "blink")
BLINK_MODES = ("bidirectional", "down_only", "up_only")
_MODE_ALIASES = {"bi": "bidirectional", "down": "down_only", "up": "up_only"}


@dataclass(frozen=True, slots=True)
class DecoderState:
    """Progress of the pointer decoder over the ``n - 1`` boundaries of a document.

    ``merged`` boundaries take ranks 0, 1, ... in order; ``split_committed``
    boundaries take ranks n-2, n-3, ... in order.
    """

    n: int
    merged: tuple[int, ...] = ()
    split_committed: tuple[int, ...] = ()
    unassigned: frozenset[int] = field(init=False)

    def __post_init__(self) -> None:
        taken = set(self.merged) | set(self.split_committed)
        if len(taken) != len(self.merged) + len(self.split_committed):
            raise TreeError("a boundary was assigned twice")
        if not taken <= set(range(self.n - 1)):
            raise TreeError(f"assigned boundaries outside [0, {self.n - 2}]")
        object.__setattr__(self, "unassigned", frozenset(range(self.n - 1)) - taken)

    def combine(self, b: int) -> "DecoderState":
        self._check_open(b)
        return DecoderState(self.n, self.merged + (b,), self.split_committed)

    def split(self, b: int) -> "DecoderState":
        self._check_open(b)
        return DecoderState(self.n, self.merged, self.split_committed + (b,))

    def _check_open(self, b: int) -> None:
        if b not in self.unassigned:
            raise TreeError(f"boundary {b} is not unassigned")

    def ranking(self) -> dict[int, int]:
        if self.unassigned:
            raise TreeError(f"boundaries {sorted(self.unassigned)} still unassigned")
        ranks = {b: r for r, b in enumerate(self.merged)}
        ranks.update({b: self.n - 2 - r for r, b in enumerate(self.split_committed)})
        return ranks


def result_convert(doc: Document, scorer: Scorer) -> Tree:
    """Split each span at its most probable topic boundary, top-down."""
    scores = scorer.seg_scores(doc)
    return tree_from_ranks(doc.n, scores.ranking())


def oracle_annotate(doc: Document, scorer: Scorer) -> Tree:
    """Top-down splitting where gold topic boundaries precede all others.

    Within the gold and non-gold groups boundaries are ordered by
    segmentation probability.
    """
    scores = scorer.seg_scores(doc).with_golden(doc.topic_boundaries)
    return tree_from_ranks(doc.n, scores.final_ranking())


def shift_reduce(
    doc: Document, scorer: Scorer, threshold: float = 0.5
) -> tuple[Tree, list[tuple[str, Optional[float]]]]:
    """Shift/reduce parsing with coherence deciding each free action.

    Returns the tree and the action log; forced actions are logged with a
    ``None`` probability.
    """
    stack: list[Tree] = []
    queue = deque(range(doc.n))
    actions: list[tuple[str, Optional[float]]] = []
    while queue or len(stack) > 1:
        if len(stack) < 2 and queue:
            action, p = "shift", None
        elif not queue:
            action, p = "reduce", None
        else:
            front = queue[0]
            p = scorer.coherence(doc, stack[-2].span, stack[-1].span, (front, front))
            action = Label.from_coherence(p, threshold).transition
        if action == "shift":
            stack.append(Leaf(queue.popleft()))
        else:
            right = stack.pop()
            stack.append(Node(stack.pop(), right))
        actions.append((action, p))
    return stack[0], actions


def _normalize_mode(mode: str) -> str:
    mode = _MODE_ALIASES.get(mode, mode)
    if mode not in BLINK_MODES:
        raise ValueError(f"unknown decoding mode {mode!r}")
    return mode


def _best_combine(dist: ActionDistribution) -> tuple[int, float]:
    # equal scores: the higher index merges first, i.e. the lower index keeps the higher rank
    b = max(dist.combine, key=lambda k: (dist.combine[k], k))
    return b, dist.combine[b]


def _best_split(dist: ActionDistribution) -> tuple[int, float]:
    b = max(dist.split, key=lambda k: (dist.split[k], -k))
    return b, dist.split[b]


def blink_decode(
    doc: Document,
    scorer: Scorer,
    mode: Literal["bidirectional", "down_only", "up_only", "bi", "down", "up"] = "bidirectional",
) -> tuple[Tree, list[tuple[str, int, float]]]:
    """Pointer decoding that picks a merge or a split at every step.

    In ``bidirectional`` mode each step takes the single highest score across
    both distributions (combine wins a tie).  ``down_only`` only splits and
    ``up_only`` only merges.  Returns the tree and a log of
    ``(action, boundary, score)``.
    """
    mode = _normalize_mode(mode)
    state = DecoderState(doc.n)
    steps: list[tuple[str, int, float]] = []
    while state.unassigned:
        dist = scorer.pointer_scores(doc, state)
        if dist.domain != state.unassigned:
            raise TreeError(
                f"document {doc.id!r}: scorer returned boundaries {sorted(dist.domain)}, "
                f"expected {sorted(state.unassigned)}"
            )
        if mode == "down_only":
            action = "split"
        elif mode == "up_only":
            action = "combine"
        else:
            _, c = _best_combine(dist)
            _, s = _best_split(dist)
            action = "combine" if c >= s else "split"
        if action == "combine":
            b, score = _best_combine(dist)
            state = state.combine(b)
        else:
            b, score = _best_split(dist)
            state = state.split(b)
        steps.append((action, b, score))
    return tree_from_ranks(doc.n, state.ranking()), steps


def build(
    doc: Document,
    scorer: Scorer,
    method: str = "result-convert",
    mode: str = "bidirectional",
    threshold: float = 0.5,
) -> Tree:
    """Dispatch to one builder by name (see :data:`METHODS`)."""
    if method == "result-convert":
        return result_convert(doc, scorer)
    if method == "oracle":
        return oracle_annotate(doc, scorer)
    if method == "shift-reduce":
        return shift_reduce(doc, scorer, threshold)[0]
    if method == "blink":
        return blink_decode(doc, scorer, mode)[0]
    raise ValueError(f"unknown method {method!r}")


def oracle_violations(tree: Tree, topic_boundaries) -> list[str]:
    """Check that gold topic boundaries sit above every within-topic split.

    Reports a within-topic node whose span crosses a topic boundary, a topic
    split under a within-topic node, and topic blocks that are not spans.
    """
    golden = set(topic_boundaries)
    problems = []
    spans = set()
    n_leaves = 1
    stack: list[tuple[Node, bool]] = []
    if isinstance(tree, Node):
        stack.append((tree, False))
    while stack:
        node, under_plain = stack.pop()
        n_leaves += 1
        spans.add(node.span)
        b = split_boundary(node)
        is_golden = b in golden
        if is_golden and under_plain:
            problems.append(f"topic boundary {b} splits below a within-topic node")
        if not is_golden:
            crossed = sorted(g for g in golden if node.start <= g < node.end)
            if crossed:
                problems.append(
                    f"within-topic split at {b} covers topic boundaries {crossed}"
                )
        for child in (node.left, node.right):
            if isinstance(child, Node):
                stack.append((child, under_plain or not is_golden))
    start = 0
    for g in sorted(golden) + [n_leaves - 1]:
        block = (start, g)
        if block[0] < block[1] and block not in spans:
            problems.append(f"topic block {block} is not the span of any node")
        start = g + 1
    return problems


__all__ = [
    "DecoderState",
    "result_convert",
    "oracle_annotate",
    "shift_reduce",
    "blink_decode",
    "build",
    "oracle_violations",
    "METHODS",
    "BLINK_MODES",
]
