"""Synthetic corpora and probability files for tests and demos.

Real macro-level treebanks are licensed; these fixtures mimic their shape:
paragraphs grouped into topics, each topic drawing from its own vocabulary,
and gold trees in which every topic is a subtree.
"""

from __future__ import annotations

import random
import string
from typing import Iterable, Optional

from .document import Document, Unit
from .tree import ranks_from_scores, tree_from_ranks

COMMON_WORDS = ("the", "a", "of", "and", "to", "in", "said", "was")


def _word(rng: random.Random) -> str:
    return "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(4, 8)))


def synthetic_document(
    doc_id: str,
    n_paragraphs: int,
    rng: random.Random,
    n_topics: Optional[int] = None,
    words_per_paragraph: int = 12,
) -> Document:
    n = n_paragraphs
    if n_topics is None:
        n_topics = rng.randint(1, max(1, min(4, n // 2)))
    n_topics = max(1, min(n_topics, n))
    boundaries = frozenset(rng.sample(range(n - 1), n_topics - 1)) if n > 1 else frozenset()

    units = []
    vocab = [_word(rng) for _ in range(10)]
    for i in range(n):
        if i > 0 and (i - 1) in boundaries:
            vocab = [_word(rng) for _ in range(10)]
        words = [rng.choice(vocab) for _ in range(words_per_paragraph)]
        words += rng.sample(COMMON_WORDS, 3)
        rng.shuffle(words)
        units.append(Unit(" ".join(words), "paragraph"))

    # topic boundaries outrank all others, so each topic is a subtree
    keys = [(int(b in boundaries), rng.random()) for b in range(n - 1)]
    gold = tree_from_ranks(n, ranks_from_scores(keys))
    return Document(doc_id, tuple(units), boundaries, tuple(range(n)), gold_tree=gold, tier="gold")


def synthetic_corpus(
    n_docs: int, seed: int = 0, min_paragraphs: int = 2, max_paragraphs: int = 12
) -> list[Document]:
    rng = random.Random(seed)
    return [
        synthetic_document(f"doc{i:04d}", rng.randint(min_paragraphs, max_paragraphs), rng)
        for i in range(n_docs)
    ]


def synthetic_probabilities(
    docs: Iterable[Document], seed: int = 0, noise: float = 0.3, pointer: bool = True
) -> list[dict]:
    """Probability-file records whose ``seg_prob`` peaks near topic boundaries."""
    rng = random.Random(seed)
    records = []
    for d in docs:
        seg = []
        for b in range(d.n_boundaries):
            base = 0.7 if b in d.topic_boundaries else 0.3
            p = min(1.0, max(0.0, base + rng.uniform(-noise, noise)))
            seg.append(round(p, 6))
        rec = {"id": d.id, "seg_prob": seg}
        if pointer:
            rec["combine"] = [round(1.0 - p, 6) for p in seg]
            rec["split"] = list(seg)
        records.append(rec)
    return records
