"""Macro-level discourse trees from topic-segmentation signals."""

from .builders import DecoderState, blink_decode, oracle_annotate, oracle_violations, result_convert, shift_reduce
from .document import Document, DocumentError, Unit
from .evaluation import EvalConfig, EvalReport, corpus_eval, layer_bucket, shape_distribution, span_accuracy
from .scorers import (
    ActionDistribution,
    BoundaryScores,
    CapabilityError,
    ConstantScorer,
    ExternalScorer,
    FileScorer,
    Label,
    LexicalScorer,
    Scorer,
    ScorerError,
    SegDerivedScorer,
)
from .tree import (
    Leaf,
    Node,
    Tree,
    TreeError,
    format_tree,
    parse_tree,
    ranks_from_scores,
    ranks_from_tree,
    shape_signature,
    tree_from_ranks,
    validate,
)

__version__ = "0.1.0"
