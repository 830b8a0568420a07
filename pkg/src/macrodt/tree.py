"""Binary discourse trees over contiguous unit spans.

A tree over ``n`` units has ``n - 1`` internal nodes, one per boundary.
Boundary ``i`` sits between unit ``i`` and unit ``i + 1``.  Every builder in
this package reduces to choosing a total order over boundaries; the
functions here convert between such an order (a :data:`Ranking`) and the
tree it induces.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Literal, Mapping, Sequence, Union

__all__ = [
    "Leaf",
    "Node",
    "Tree",
    "TreeError",
    "Ranking",
    "as_ranking",
    "ranks_from_scores",
    "tree_from_ranks",
    "ranks_from_tree",
    "split_boundary",
    "internal_nodes",
    "leaves",
    "shape_signature",
    "validate",
    "parse_tree",
    "format_tree",
    "all_trees",
    "left_comb",
    "right_comb",
]

LEAF_PLACEHOLDER = "·"


class TreeError(ValueError):
    """Structural problem with a tree or a boundary ranking."""


@dataclass(frozen=True, slots=True)
class Leaf:
    index: int

    @property
    def start(self) -> int:
        return self.index

    @property
    def end(self) -> int:
        return self.index

    @property
    def span(self) -> tuple[int, int]:
        return (self.index, self.index)

    def __str__(self) -> str:
        return str(self.index)


@dataclass(frozen=True, slots=True, eq=False)
class Node:
    left: Tree
    right: Tree
    start: int = field(init=False, repr=False)
    end: int = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", self.left.start)
        object.__setattr__(self, "end", self.right.end)

    # iterative, so deep (comb-shaped) trees do not hit the recursion limit
    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Node):
            return NotImplemented
        stack: list[tuple[Tree, Tree]] = [(self, other)]
        while stack:
            a, b = stack.pop()
            if a is b:
                continue
            if isinstance(a, Node) and isinstance(b, Node):
                stack.append((a.right, b.right))
                stack.append((a.left, b.left))
            elif a != b:
                return False
        return True

    def __hash__(self) -> int:
        return hash(format_tree(self))

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    def __str__(self) -> str:
        return format_tree(self)


Tree = Union[Leaf, Node]

# boundary index -> rank; higher rank splits earlier (and merges later)
Ranking = Mapping[int, float]


def as_ranking(ranking: Ranking | Sequence[float], n: int) -> dict[int, float]:
    """Normalize ``ranking`` to a dict and check it covers ``[0, n-2]`` with distinct values."""
    if isinstance(ranking, Mapping):
        ranks = dict(ranking)
    else:
        ranks = dict(enumerate(ranking))
    expected = set(range(n - 1))
    if set(ranks) != expected:
        missing = sorted(expected - set(ranks))
        extra = sorted(set(ranks) - expected)
        raise TreeError(
            f"ranking domain mismatch for n={n}: missing {missing}, unexpected {extra}"
        )
    if len(set(ranks.values())) != len(ranks):
        raise TreeError("ranking contains duplicate rank values")
    return ranks


def ranks_from_scores(scores: Mapping[int, object] | Sequence[object]) -> dict[int, int]:
    """Turn per-boundary scores into integer ranks, higher score -> higher rank.

    Scores may be any mutually comparable keys (floats, tuples).  Equal
    scores are broken so the lower boundary index gets the higher rank.
    """
    items = scores.items() if isinstance(scores, Mapping) else enumerate(scores)
    order = sorted(items, key=lambda kv: (kv[1], -kv[0]))
    return {b: r for r, (b, _) in enumerate(order)}


def tree_from_ranks(
    n: int,
    ranking: Ranking | Sequence[float],
    direction: Literal["top_down", "bottom_up"] = "top_down",
) -> Tree:
    """Build the unique tree whose split order follows ``ranking``.

    ``top_down`` splits each span at its highest-ranked boundary;
    ``bottom_up`` repeatedly merges across the lowest-ranked boundary.  The
    two always agree.
    """
    if n < 1:
        raise TreeError(f"leaf count must be >= 1, got {n}")
    ranks = as_ranking(ranking, n)
    if direction == "top_down":
        return _split_top_down(ranks, 0, n - 1)
    if direction == "bottom_up":
        return _merge_bottom_up(ranks, n)
    raise ValueError(f"unknown direction {direction!r}")


def _split_top_down(ranks: dict[int, float], lo: int, hi: int) -> Tree:
    # explicit stack: documents can have more units than the recursion limit
    result: dict[tuple[int, int], Tree] = {}
    todo: list[tuple[int, int, bool]] = [(lo, hi, False)]
    cut: dict[tuple[int, int], int] = {}
    while todo:
        a, b, expanded = todo.pop()
        if a == b:
            result[(a, b)] = Leaf(a)
            continue
        if expanded:
            k = cut[(a, b)]
            result[(a, b)] = Node(result.pop((a, k)), result.pop((k + 1, b)))
            continue
        k = max(range(a, b), key=ranks.__getitem__)
        cut[(a, b)] = k
        todo.append((a, b, True))
        todo.append((a, k, False))
        todo.append((k + 1, b, False))
    return result[(lo, hi)]


def _merge_bottom_up(ranks: dict[int, float], n: int) -> Tree:
    by_start: dict[int, Tree] = {i: Leaf(i) for i in range(n)}
    start_of_end: dict[int, int] = {i: i for i in range(n)}
    for b in sorted(ranks, key=ranks.__getitem__):
        left_start = start_of_end.pop(b)
        left = by_start.pop(left_start)
        right = by_start.pop(b + 1)
        merged = Node(left, right)
        by_start[left_start] = merged
        start_of_end[merged.end] = left_start
    (root,) = by_start.values()
    return root


def split_boundary(node: Node) -> int:
    """Boundary index at which ``node`` splits its span."""
    return node.left.end


def internal_nodes(tree: Tree) -> Iterator[Node]:
    """Pre-order traversal of internal nodes."""
    stack = [tree]
    while stack:
        t = stack.pop()
        if isinstance(t, Node):
            yield t
            stack.append(t.right)
            stack.append(t.left)


def leaves(tree: Tree) -> list[int]:
    out = []
    stack = [tree]
    while stack:
        t = stack.pop()
        if isinstance(t, Leaf):
            out.append(t.index)
        elif isinstance(t, Node):
            stack.append(t.right)
            stack.append(t.left)
        else:
            raise TreeError(f"not a tree node: {t!r}")
    return out


def ranks_from_tree(tree: Tree) -> dict[int, int]:
    """A ranking that reproduces ``tree`` under :func:`tree_from_ranks`.

    The ``p``-th internal node in pre-order gets rank ``n - 1 - p``, so every
    node outranks its descendants.
    """
    problems = validate(tree, len(leaves(tree)))
    if problems:
        raise TreeError("; ".join(problems))
    n_internal = sum(1 for _ in internal_nodes(tree))
    n = n_internal + 1
    return {split_boundary(node): n - 1 - p for p, node in enumerate(internal_nodes(tree))}


def _render(tree: Tree, leaf) -> Iterator[str]:
    stack: list[object] = [tree]
    while stack:
        t = stack.pop()
        if isinstance(t, str):
            yield t
        elif isinstance(t, Node):
            yield "("
            stack.extend([")", t.right, t.left])
        else:
            yield leaf(t)


def shape_signature(tree: Tree) -> str:
    """Parenthesized shape with leaves rendered as a placeholder, e.g. ``((··)·)``."""
    return "".join(_render(tree, lambda _: LEAF_PLACEHOLDER))


def validate(tree: object, n: int) -> list[str]:
    """Return every invariant violation of ``tree`` as a leaf-``n`` discourse tree.

    An empty list means the tree is valid.
    """
    problems: list[str] = []
    found: list[int] = []
    n_internal = 0
    stack = [tree]
    while stack:
        t = stack.pop()
        if isinstance(t, Leaf):
            if not isinstance(t.index, int) or isinstance(t.index, bool):
                problems.append(f"leaf index {t.index!r} is not an integer")
            else:
                found.append(t.index)
        elif isinstance(t, Node):
            n_internal += 1
            stack.append(t.right)
            stack.append(t.left)
        else:
            problems.append(f"not a binary tree node: {t!r}")
    if found != list(range(n)):
        if sorted(found) == list(range(n)):
            problems.append(f"leaves out of order: {found}")
        elif len(found) != len(set(found)):
            problems.append(f"duplicate leaf indices: {found}")
        else:
            problems.append(f"leaves {found} are not the contiguous range 0..{n - 1}")
    if n_internal != n - 1:
        problems.append(f"{n_internal} internal nodes, expected {n - 1}")
    return problems


_TOKEN = re.compile(r"\s*(\(|\)|\d+)")


def parse_tree(text: str) -> Tree:
    """Parse the bracket form ``((0 1) 2)``; non-binary brackets are rejected."""
    tokens: list[str] = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise TreeError(f"unexpected character at offset {pos} in {text!r}")
        tokens.append(m.group(1))
        pos = m.end()
    if not tokens:
        raise TreeError("empty tree text")

    stack: list[list[Tree]] = []
    root: Tree | None = None
    for tok in tokens:
        if root is not None:
            raise TreeError(f"trailing input after tree in {text!r}")
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if not stack:
                raise TreeError(f"unbalanced ')' in {text!r}")
            children = stack.pop()
            if len(children) != 2:
                raise TreeError(
                    f"node with {len(children)} children in {text!r}; trees must be binary"
                )
            node = Node(children[0], children[1])
            if stack:
                stack[-1].append(node)
            else:
                root = node
        else:
            leaf = Leaf(int(tok))
            if stack:
                stack[-1].append(leaf)
            else:
                root = leaf
    if stack or root is None:
        raise TreeError(f"unbalanced '(' in {text!r}")
    return root


def format_tree(tree: Tree) -> str:
    """Canonical bracket form with single-space separators."""
    parts: list[str] = []
    prev = "("
    for tok in _render(tree, lambda leaf: str(leaf.index)):
        if prev != "(" and tok != ")":
            parts.append(" ")
        parts.append(tok)
        prev = tok
    return "".join(parts)


def all_trees(lo: int, hi: int) -> Iterator[Tree]:
    """Every binary tree over leaves ``lo..hi`` (Catalan-many)."""
    if lo == hi:
        yield Leaf(lo)
        return
    for k in range(lo, hi):
        for left in all_trees(lo, k):
            for right in all_trees(k + 1, hi):
                yield Node(left, right)


def left_comb(n: int) -> Tree:
    t: Tree = Leaf(0)
    for i in range(1, n):
        t = Node(t, Leaf(i))
    return t


def right_comb(n: int) -> Tree:
    t: Tree = Leaf(n - 1)
    for i in range(n - 2, -1, -1):
        t = Node(Leaf(i), t)
    return t
