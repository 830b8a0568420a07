"""Documents: ordered units with paragraph and topic boundary annotations."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .tree import Tree, validate

UNIT_KINDS = ("edu", "sentence", "paragraph")
TIERS = ("gold", "silver")


class DocumentError(ValueError):
    """A document violates its invariants."""


@dataclass(frozen=True, slots=True)
class Unit:
    text: str = ""
    kind: str = "paragraph"

    def __post_init__(self) -> None:
        if self.kind not in UNIT_KINDS:
            raise DocumentError(f"unknown unit kind {self.kind!r}")


@dataclass(frozen=True, slots=True)
class Document:
    """A document ready for tree building.

    ``topic_boundaries`` holds boundary indices, where boundary ``i`` lies
    between unit ``i`` and unit ``i + 1``.  ``paragraph_of[i]`` is the
    paragraph id of unit ``i``.
    """

    id: str
    units: tuple[Unit, ...]
    topic_boundaries: frozenset[int] = frozenset()
    paragraph_of: tuple[int, ...] = ()
    gold_tree: Optional[Tree] = None
    silver_tree: Optional[Tree] = None
    tier: Optional[str] = None
    fold: Optional[int] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "units", tuple(self.units))
        object.__setattr__(self, "topic_boundaries", frozenset(self.topic_boundaries))
        if not self.paragraph_of:
            object.__setattr__(self, "paragraph_of", tuple(range(len(self.units))))
        else:
            object.__setattr__(self, "paragraph_of", tuple(self.paragraph_of))
        problems = self.problems()
        if problems:
            raise DocumentError(f"document {self.id!r}: " + "; ".join(problems))

    @property
    def n(self) -> int:
        return len(self.units)

    @property
    def n_boundaries(self) -> int:
        return len(self.units) - 1

    @property
    def n_paragraphs(self) -> int:
        return len(set(self.paragraph_of))

    def problems(self) -> list[str]:
        out = []
        n = len(self.units)
        if n == 0:
            out.append("document has no units")
        bad = sorted(b for b in self.topic_boundaries if not 0 <= b <= n - 2)
        if bad:
            out.append(f"topic boundaries {bad} outside [0, {n - 2}]")
        if len(self.paragraph_of) != n:
            out.append(f"paragraph_of has {len(self.paragraph_of)} entries for {n} units")
        elif any(a > b for a, b in zip(self.paragraph_of, self.paragraph_of[1:])):
            out.append("paragraph_of is not monotone non-decreasing")
        for name in ("gold_tree", "silver_tree"):
            t = getattr(self, name)
            if t is not None:
                out.extend(f"{name}: {p}" for p in validate(t, n))
        if self.tier is not None and self.tier not in TIERS:
            out.append(f"unknown tier {self.tier!r}")
        return out

    def with_(self, **changes) -> "Document":
        return replace(self, **changes)

    def topic_blocks(self) -> list[tuple[int, int]]:
        """Maximal unit runs not crossed by a topic boundary, as (first, last)."""
        blocks = []
        start = 0
        for b in sorted(self.topic_boundaries):
            blocks.append((start, b))
            start = b + 1
        blocks.append((start, self.n - 1))
        return blocks


def plain_document(doc_id: str, n: int, topic_boundaries=(), kind: str = "paragraph") -> Document:
    """Document of ``n`` empty units; handy for fixtures driven by stored scores."""
    return Document(doc_id, tuple(Unit("", kind) for _ in range(n)), frozenset(topic_boundaries))
