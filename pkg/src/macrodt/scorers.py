"""Score sources for the tree builders.

Builders never look at text.  They ask a :class:`Scorer` for one of three
signals:

* ``segmentation`` - a probability per boundary that it starts a new topic,
* ``coherence`` - the probability that the stack top and the queue front
  belong together (used by the shift-reduce builder),
* ``pointer`` - combine/split scores over the still-unassigned boundaries
  (used by the bidirectional pointer decoder).

Backends: :class:`FileScorer` (stored probabilities), :class:`LexicalScorer`
(a self-contained lexical-cohesion segmenter), :class:`ConstantScorer`,
:class:`SegDerivedScorer` (adds coherence/pointer on top of segmentation) and
:class:`ExternalScorer` (a line-delimited JSON subprocess).
"""

from __future__ import annotations

import json
import logging
import math
import shlex
import subprocess
from collections import Counter
from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Mapping, Optional, Sequence

from .document import Document
from .tree import ranks_from_scores

if TYPE_CHECKING:
    from .builders import DecoderState

log = logging.getLogger(__name__)

SEGMENTATION = "segmentation"
COHERENCE = "coherence"
POINTER = "pointer"
ALL_CAPABILITIES = frozenset({SEGMENTATION, COHERENCE, POINTER})

Span = tuple[int, int]


class ScorerError(RuntimeError):
    """A scorer could not produce a valid answer."""


class CapabilityError(ScorerError):
    pass


class MissingDocumentError(ScorerError, KeyError):
    def __str__(self) -> str:
        return RuntimeError.__str__(self)


class ProtocolError(ScorerError):
    """An external scorer broke the request/response contract."""


class Label(IntEnum):
    """Label mapping shared by the segmenter and the transition parser.

    ============ ============ ============ ========== =====
    label        relation     segmentation transition value
    ============ ============ ============ ========== =====
    COHERENT     coherent     combine      reduce     0
    INCOHERENT   incoherent   split        shift      1
    ============ ============ ============ ========== =====
    """

    COHERENT = 0
    INCOHERENT = 1

    @property
    def relation(self) -> str:
        return ("coherent", "incoherent")[self]

    @property
    def segmentation(self) -> str:
        return ("combine", "split")[self]

    @property
    def transition(self) -> str:
        return ("reduce", "shift")[self]

    @classmethod
    def from_action(cls, action: str) -> "Label":
        for label in cls:
            if action in (label.relation, label.segmentation, label.transition):
                return label
        raise ValueError(f"no label for action {action!r}")

    @classmethod
    def from_coherence(cls, p: float, threshold: float = 0.5) -> "Label":
        return cls.COHERENT if p >= threshold else cls.INCOHERENT


@dataclass(frozen=True, slots=True)
class BoundaryScores:
    """Per-boundary segmentation probabilities, optionally with gold topic marks.

    ``final_key(b)`` orders boundaries for oracle annotation: any gold topic
    boundary beats any other boundary, ties within a class go by ``seg_prob``.
    """

    seg_prob: tuple[float, ...]
    golden_prob: Optional[tuple[int, ...]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "seg_prob", tuple(float(p) for p in self.seg_prob))
        for b, p in enumerate(self.seg_prob):
            if not (0.0 <= p <= 1.0):
                raise ScorerError(f"seg_prob[{b}] = {p} outside [0, 1]")
        if self.golden_prob is not None:
            object.__setattr__(self, "golden_prob", tuple(int(g) for g in self.golden_prob))
            if len(self.golden_prob) != len(self.seg_prob):
                raise ScorerError("golden_prob and seg_prob cover different boundaries")
            if any(g not in (0, 1) for g in self.golden_prob):
                raise ScorerError("golden_prob values must be 0 or 1")

    def __len__(self) -> int:
        return len(self.seg_prob)

    def with_golden(self, topic_boundaries) -> "BoundaryScores":
        marks = tuple(int(b in topic_boundaries) for b in range(len(self.seg_prob)))
        return BoundaryScores(self.seg_prob, marks)

    def final_key(self, b: int) -> tuple[int, float]:
        golden = self.golden_prob[b] if self.golden_prob is not None else 0
        return (golden, self.seg_prob[b])

    def ranking(self) -> dict[int, int]:
        """Ranks by descending segmentation probability."""
        return ranks_from_scores(self.seg_prob)

    def final_ranking(self) -> dict[int, int]:
        """Ranks by descending ``final_key``."""
        return ranks_from_scores([self.final_key(b) for b in range(len(self.seg_prob))])


@dataclass(frozen=True, slots=True)
class ActionDistribution:
    """Combine and split scores over the currently unassigned boundaries."""

    combine: Mapping[int, float]
    split: Mapping[int, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "combine", {int(b): float(v) for b, v in self.combine.items()})
        object.__setattr__(self, "split", {int(b): float(v) for b, v in self.split.items()})
        if set(self.combine) != set(self.split):
            raise ScorerError(
                f"combine domain {sorted(self.combine)} != split domain {sorted(self.split)}"
            )

    @property
    def domain(self) -> frozenset[int]:
        return frozenset(self.combine)

    def restrict(self, boundaries) -> "ActionDistribution":
        keep = set(boundaries)
        return ActionDistribution(
            {b: v for b, v in self.combine.items() if b in keep},
            {b: v for b, v in self.split.items() if b in keep},
        )


class Scorer:
    """Base class for score sources.

    Subclasses set ``capabilities`` and implement the matching ``_seg``,
    ``_coherence`` or ``_pointer`` hook.  ``shareable`` tells callers whether
    one instance may serve several worker threads at once.
    """

    capabilities: frozenset[str] = frozenset()
    shareable: bool = True

    def _require(self, capability: str) -> None:
        if capability not in self.capabilities:
            raise CapabilityError(
                f"{type(self).__name__} has no {capability} capability "
                f"(has: {', '.join(sorted(self.capabilities)) or 'none'})"
            )

    def seg_scores(self, doc: Document) -> BoundaryScores:
        self._require(SEGMENTATION)
        scores = self._seg(doc)
        if len(scores) != doc.n_boundaries:
            raise ScorerError(
                f"document {doc.id!r}: {len(scores)} segmentation scores for "
                f"{doc.n_boundaries} boundaries"
            )
        return scores

    def coherence(
        self,
        doc: Document,
        stack_second: Optional[Span],
        stack_top: Span,
        queue_front: Span,
    ) -> float:
        self._require(COHERENCE)
        if stack_second is not None and stack_second[1] + 1 != stack_top[0]:
            raise ScorerError(f"spans {stack_second} and {stack_top} are not adjacent")
        if stack_top[1] + 1 != queue_front[0]:
            raise ScorerError(f"spans {stack_top} and {queue_front} are not adjacent")
        p = float(self._coherence(doc, stack_second, stack_top, queue_front))
        if not 0.0 <= p <= 1.0:
            raise ScorerError(f"coherence {p} outside [0, 1]")
        return p

    def pointer_scores(self, doc: Document, state: "DecoderState") -> ActionDistribution:
        self._require(POINTER)
        if not state.unassigned:
            raise ScorerError("pointer_scores called on a finished decoder state")
        return self._pointer(doc, state)

    def _seg(self, doc: Document) -> BoundaryScores:
        raise NotImplementedError

    def _coherence(self, doc, stack_second, stack_top, queue_front) -> float:
        raise NotImplementedError

    def _pointer(self, doc, state) -> ActionDistribution:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class ConstantScorer(Scorer):
    """Returns the same coherence (and optionally segmentation) everywhere."""

    def __init__(self, coherence: float | None = None, seg: float | None = None):
        caps = set()
        if coherence is not None:
            caps.add(COHERENCE)
        if seg is not None:
            caps.add(SEGMENTATION)
        self.capabilities = frozenset(caps)
        self.value = coherence
        self.seg = seg

    def _seg(self, doc):
        return BoundaryScores([self.seg] * doc.n_boundaries)

    def _coherence(self, doc, stack_second, stack_top, queue_front):
        return self.value


class FileScorer(Scorer):
    """Scores read from a probability JSONL file.

    Each line is ``{"id": ..., "seg_prob": [...], "combine": [...],
    "split": [...]}``; an optional ``"coherence"`` array gives the coherence
    at each boundary.  A capability is available only if every record carries
    the array(s) it needs.
    """

    _ARRAYS = ("seg_prob", "combine", "split", "coherence")

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.records: dict[str, dict[str, tuple[float, ...]]] = {}
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    doc_id = str(rec["id"])
                    arrays = {k: tuple(float(v) for v in rec[k]) for k in self._ARRAYS if k in rec}
                except (ValueError, KeyError, TypeError) as e:
                    raise ScorerError(f"{self.path}:{lineno}: bad probability record: {e}") from e
                lengths = {len(a) for a in arrays.values()}
                if len(lengths) > 1:
                    raise ScorerError(f"{self.path}:{lineno}: arrays of unequal length")
                if doc_id in self.records:
                    raise ScorerError(f"{self.path}:{lineno}: duplicate id {doc_id!r}")
                self.records[doc_id] = arrays
        recs = list(self.records.values())
        caps = set()
        if recs and all("seg_prob" in r for r in recs):
            caps.add(SEGMENTATION)
        if recs and all("coherence" in r for r in recs):
            caps.add(COHERENCE)
        if recs and all("combine" in r and "split" in r for r in recs):
            caps.add(POINTER)
        self.capabilities = frozenset(caps)

    def _record(self, doc: Document, key: str) -> tuple[float, ...]:
        try:
            values = self.records[doc.id][key]
        except KeyError:
            raise MissingDocumentError(f"{self.path}: no {key} for document {doc.id!r}") from None
        if len(values) != doc.n_boundaries:
            raise ScorerError(
                f"{self.path}: document {doc.id!r} has {len(values)} {key} values "
                f"for {doc.n_boundaries} boundaries"
            )
        return values

    def _seg(self, doc):
        return BoundaryScores(self._record(doc, "seg_prob"))

    def _coherence(self, doc, stack_second, stack_top, queue_front):
        return self._record(doc, "coherence")[stack_top[1]]

    def _pointer(self, doc, state):
        combine = self._record(doc, "combine")
        split = self._record(doc, "split")
        return ActionDistribution(
            {b: combine[b] for b in state.unassigned},
            {b: split[b] for b in state.unassigned},
        )


class _DerivedSignals:
    """coherence and pointer signals computed from ``self.seg_scores``."""

    def _coherence(self, doc, stack_second, stack_top, queue_front):
        return 1.0 - self.seg_scores(doc).seg_prob[stack_top[1]]

    def _pointer(self, doc, state):
        seg = self.seg_scores(doc).seg_prob
        return ActionDistribution(
            {b: 1.0 - seg[b] for b in state.unassigned},
            {b: seg[b] for b in state.unassigned},
        )


class SegDerivedScorer(_DerivedSignals, Scorer):
    """Adds coherence and pointer signals on top of a segmentation scorer.

    coherence at boundary ``b`` is ``1 - seg_prob[b]``; pointer scores are
    ``split(b) = seg_prob[b]`` and ``combine(b) = 1 - seg_prob[b]``.
    """

    def __init__(self, base: Scorer):
        base._require(SEGMENTATION)
        self.base = base
        self.capabilities = base.capabilities | ALL_CAPABILITIES
        self.shareable = base.shareable

    def _seg(self, doc):
        return self.base.seg_scores(doc)

    def close(self) -> None:
        self.base.close()


def with_derived(scorer: Scorer, needed: str) -> Scorer:
    """Return ``scorer`` if it already has ``needed``, else derive it from segmentation."""
    if needed in scorer.capabilities:
        return scorer
    if SEGMENTATION in scorer.capabilities:
        log.info("deriving %s scores from segmentation for %s", needed, type(scorer).__name__)
        return SegDerivedScorer(scorer)
    raise CapabilityError(f"{type(scorer).__name__} cannot provide {needed} scores")


def _tokens(text: str) -> Counter:
    return Counter(text.lower().split())


def _cosine(a: Counter, b: Counter) -> float:
    if not a or not b:
        return 0.0
    dot = sum(v * b[k] for k, v in a.items() if k in b)
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    return dot / (na * nb)


@lru_cache(maxsize=4096)
def lexical_seg_scores(texts: tuple[str, ...], window: int = 2) -> tuple[float, ...]:
    """Depth scores of a sliding-window cosine gap curve, min-max normalized.

    For boundary ``b`` the left block is the ``window`` units ending at ``b``
    and the right block the ``window`` units starting at ``b + 1``.  A flat
    curve (including a single boundary) normalizes to all zeros.
    """
    n = len(texts)
    if n < 2:
        return ()
    bags = [_tokens(t) for t in texts]
    sims = []
    for b in range(n - 1):
        left: Counter = Counter()
        for bag in bags[max(0, b - window + 1) : b + 1]:
            left.update(bag)
        right: Counter = Counter()
        for bag in bags[b + 1 : b + 1 + window]:
            right.update(bag)
        sims.append(_cosine(left, right))

    depths = []
    for b, s in enumerate(sims):
        lpeak = s
        i = b
        while i > 0 and sims[i - 1] >= lpeak:
            lpeak = sims[i - 1]
            i -= 1
        rpeak = s
        i = b
        while i < len(sims) - 1 and sims[i + 1] >= rpeak:
            rpeak = sims[i + 1]
            i += 1
        depths.append((lpeak - s) + (rpeak - s))

    lo, hi = min(depths), max(depths)
    if math.isclose(hi, lo, abs_tol=1e-12):
        return tuple(0.0 for _ in depths)
    return tuple((d - lo) / (hi - lo) for d in depths)


class LexicalScorer(_DerivedSignals, Scorer):
    """Lexical-cohesion segmenter (TextTiling-style depth scores).

    Needs nothing but unit text; coherence and pointer scores are derived
    from the segmentation probabilities.
    """

    capabilities = ALL_CAPABILITIES

    def __init__(self, window: int = 2):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window

    def _seg(self, doc):
        return BoundaryScores(lexical_seg_scores(tuple(u.text for u in doc.units), self.window))


class ExternalScorer(Scorer):
    """Scorer backed by a subprocess speaking JSON Lines over stdin/stdout.

    Requests (one per line, answered in order)::

        {"op": "seg", "doc_id": ..., "units": [...]}
            -> {"seg_prob": [...]}
        {"op": "coherence", "doc_id": ..., "stack_second": [i, j] | null,
         "stack_top": [i, j], "queue_front": [i, j], "boundary": b}
            -> {"coherence": p}
        {"op": "pointer", "doc_id": ..., "merged": [...], "split": [...],
         "unassigned": [...]}
            -> {"combine": {"b": score, ...}, "split": {"b": score, ...}}

    A response ``{"error": "..."}`` is raised as :class:`ScorerError`.  The
    process holds per-connection state, so an instance must stay with one
    worker.  ``trace``, when given, receives every ``(request, response)``.
    """

    shareable = False

    def __init__(
        self,
        command: str | Sequence[str],
        capabilities=ALL_CAPABILITIES,
        trace: Optional[Callable[[dict, dict], None]] = None,
    ):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.capabilities = frozenset(capabilities)
        self.trace = trace
        try:
            self.proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as e:
            raise ScorerError(f"cannot start scorer {self.command}: {e}") from e

    def request(self, payload: dict) -> dict:
        if self.proc.poll() is not None:
            raise ScorerError(f"scorer process exited with code {self.proc.returncode}")
        try:
            self.proc.stdin.write(json.dumps(payload) + "\n")
            self.proc.stdin.flush()
            line = self.proc.stdout.readline()
        except (BrokenPipeError, OSError) as e:
            raise ScorerError(f"scorer process I/O failed: {e}") from e
        if not line:
            raise ScorerError("scorer process closed its output")
        try:
            response = json.loads(line)
        except ValueError as e:
            raise ProtocolError(f"unparseable scorer response {line!r}") from e
        if not isinstance(response, dict):
            raise ProtocolError(f"scorer response is not an object: {line!r}")
        if "error" in response:
            raise ScorerError(f"scorer error: {response['error']}")
        if self.trace is not None:
            self.trace(payload, response)
        return response

    def _seg(self, doc):
        resp = self.request(
            {"op": "seg", "doc_id": doc.id, "units": [u.text for u in doc.units]}
        )
        try:
            return BoundaryScores(resp["seg_prob"])
        except (KeyError, TypeError) as e:
            raise ProtocolError(f"bad seg response {resp!r}") from e

    def _coherence(self, doc, stack_second, stack_top, queue_front):
        resp = self.request(
            {
                "op": "coherence",
                "doc_id": doc.id,
                "stack_second": list(stack_second) if stack_second else None,
                "stack_top": list(stack_top),
                "queue_front": list(queue_front),
                "boundary": stack_top[1],
            }
        )
        try:
            return float(resp["coherence"])
        except (KeyError, TypeError, ValueError) as e:
            raise ProtocolError(f"bad coherence response {resp!r}") from e

    def _pointer(self, doc, state):
        unassigned = sorted(state.unassigned)
        resp = self.request(
            {
                "op": "pointer",
                "doc_id": doc.id,
                "merged": list(state.merged),
                "split": list(state.split_committed),
                "unassigned": unassigned,
            }
        )
        try:
            combine = {int(b): float(v) for b, v in resp["combine"].items()}
            split = {int(b): float(v) for b, v in resp["split"].items()}
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise ProtocolError(f"bad pointer response {resp!r}") from e
        if set(combine) != set(unassigned) or set(split) != set(unassigned):
            raise ProtocolError(
                f"pointer response domains combine={sorted(combine)} split={sorted(split)} "
                f"do not match unassigned {unassigned}"
            )
        return ActionDistribution(combine, split)

    def close(self) -> None:
        proc = getattr(self, "proc", None)
        if proc is None or proc.poll() is not None:
            return
        try:
            proc.stdin.close()
            proc.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()
        finally:
            if proc.stdout:
                proc.stdout.close()


def parse_scorer_spec(spec: str, fold: Optional[int] = None) -> Scorer:
    """Build a scorer from ``file:PATH``, ``lexical[:WINDOW]`` or ``extern:CMD``.

    ``{fold}`` in the spec is replaced by ``fold`` when given.
    """
    if fold is not None:
        spec = spec.replace("{fold}", str(fold))
    kind, _, arg = spec.partition(":")
    if kind == "file":
        if not arg:
            raise ValueError("file scorer needs a path: file:PATH")
        return FileScorer(arg)
    if kind == "lexical":
        return LexicalScorer(int(arg) if arg else 2)
    if kind == "extern":
        if not arg:
            raise ValueError("extern scorer needs a command: extern:CMD")
        return ExternalScorer(arg)
    raise ValueError(f"unknown scorer spec {spec!r}; expected file:PATH, lexical or extern:CMD")
