"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 scorer error.
Outputs are written to a temporary file and renamed, so a failed run never
leaves a partial file behind.
"""

from __future__ import annotations

import argparse
import logging
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

from .builders import blink_decode, oracle_annotate, oracle_violations, result_convert, shift_reduce
from .corpus import (
    CorpusError,
    SilverGenError,
    assign_folds,
    atomic_writer,
    document_to_record,
    load_corpus,
    load_predictions,
    read_jsonl,
    write_jsonl,
)
from .document import DocumentError
from .evaluation import EvalConfig, EvalError, corpus_eval, shape_distribution
from .scorers import COHERENCE, POINTER, SEGMENTATION, CapabilityError, Scorer, ScorerError, parse_scorer_spec, with_derived
from .tree import TreeError, format_tree, parse_tree

log = logging.getLogger("macrodt")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SCORER = 0, 2, 3, 4
DATA_ERRORS = (CorpusError, DocumentError, TreeError, EvalError)

METHOD_NEEDS = {"result-convert": SEGMENTATION, "shift-reduce": COHERENCE, "blink": POINTER}
MODE_NAMES = {"bi": "bidirectional", "down": "down_only", "up": "up_only"}


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


class ScorerPool:
    """Hands each worker thread its own scorer unless the scorer is shareable."""

    def __init__(self, factory: Callable[[], Scorer]):
        self.factory = factory
        self.first = factory()
        self.created = [self.first]
        self.first_free = True
        self.local = threading.local()
        self.lock = threading.Lock()

    def get(self) -> Scorer:
        if self.first.shareable:
            return self.first
        scorer = getattr(self.local, "scorer", None)
        if scorer is None:
            with self.lock:
                if self.first_free:
                    scorer, self.first_free = self.first, False
                else:
                    scorer = self.factory()
                    self.created.append(scorer)
            self.local.scorer = scorer
        return scorer

    def close(self) -> None:
        for s in self.created:
            s.close()


def _make_scorer_factory(spec: str, needed: Optional[str], fold: Optional[int] = None):
    def factory() -> Scorer:
        scorer = parse_scorer_spec(spec, fold)
        return with_derived(scorer, needed) if needed else scorer

    return factory


def _open_scorer_pool(spec: str, needed: Optional[str]) -> ScorerPool:
    try:
        return ScorerPool(_make_scorer_factory(spec, needed))
    except FileNotFoundError as e:
        raise ConfigError(f"scorer file not found: {e.filename}") from None
    except (ValueError, CapabilityError) as e:
        raise ConfigError(str(e)) from None


def _map_docs(fn, docs, jobs: int):
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(fn, docs))
    return [fn(d) for d in docs]


def cmd_build(args) -> int:
    method = args.method
    if args.mode is not None and method != "blink":
        raise ConfigError("--mode only applies to --method blink")
    if args.threshold is not None and method != "shift-reduce":
        raise ConfigError("--threshold only applies to --method shift-reduce")
    mode = MODE_NAMES[args.mode or "bi"]
    threshold = 0.5 if args.threshold is None else args.threshold
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError("--threshold must lie in [0, 1]")

    pool = _open_scorer_pool(args.scorer, METHOD_NEEDS[method])
    try:
        corpus = load_corpus(args.input)

        def run(doc):
            scorer = pool.get()
            try:
                if method == "result-convert":
                    tree = result_convert(doc, scorer)
                elif method == "shift-reduce":
                    tree = shift_reduce(doc, scorer, threshold)[0]
                else:
                    tree = blink_decode(doc, scorer, mode)[0]
            except ScorerError as e:
                raise ScorerError(f"document {doc.id!r}: {e}") from e
            return {"id": doc.id, "pred_tree": format_tree(tree)}

        records = _map_docs(run, corpus.documents, args.jobs)
    finally:
        pool.close()
    write_jsonl(args.output, records)
    log.info("wrote %d predictions to %s", len(records), args.output)
    return EXIT_OK


def cmd_oracle(args) -> int:
    folds = args.folds
    if folds is not None and folds < 2:
        raise ConfigError("--folds must be at least 2")
    corpus = load_corpus(args.input)
    if folds is None:
        pool = _open_scorer_pool(args.scorer, SEGMENTATION)
        try:

            def run(doc):
                try:
                    tree = oracle_annotate(doc, pool.get())
                except ScorerError as e:
                    raise ScorerError(f"document {doc.id!r}: {e}") from e
                return doc.with_(silver_tree=tree, tier="silver")

            docs = _map_docs(run, corpus.documents, args.jobs)
        finally:
            pool.close()
    else:
        from .corpus import silver_gen

        if len(corpus) < folds:
            raise CorpusError(f"{len(corpus)} documents cannot fill {folds} folds")

        def factory(f: int) -> Scorer:
            try:
                return _make_scorer_factory(args.scorer, SEGMENTATION, f)()
            except FileNotFoundError as e:
                raise ConfigError(f"fold {f}: scorer file not found: {e.filename}") from None

        corpus = assign_folds(corpus, folds, args.seed)
        docs = silver_gen(corpus, factory, folds, args.seed, jobs=args.jobs).documents

    if args.verify:
        bad = 0
        for d in docs:
            for problem in oracle_violations(d.silver_tree, d.topic_boundaries):
                bad += 1
                print(f"{d.id}: {problem}", file=sys.stderr)
        if bad:
            raise CorpusError(f"--verify found {bad} oracle violations")
        log.info("verified %d silver trees", len(docs))
    write_jsonl(args.output, (document_to_record(d) for d in docs))
    return EXIT_OK


def _parse_edges(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"bad --length-edges {text!r}; expected e.g. 2,5,8,11") from None


def cmd_eval(args) -> int:
    try:
        config = EvalConfig(include_root=not args.exclude_root, length_edges=_parse_edges(args.length_edges))
    except ValueError as e:
        raise ConfigError(str(e)) from None
    gold = load_corpus(args.gold)
    preds = load_predictions(args.pred)
    triples = []
    lengths = {}
    for d in gold:
        tree = getattr(d, args.gold_field)
        if tree is None:
            raise CorpusError(f"document {d.id!r} has no {args.gold_field}")
        if d.id not in preds:
            raise CorpusError(f"no prediction for document {d.id!r}")
        triples.append((d.id, preds[d.id], tree))
        lengths[d.id] = d.n_paragraphs
    extra = sorted(set(preds) - {d.id for d in gold})
    if extra:
        raise CorpusError(f"predictions for unknown documents: {extra[:5]}")
    report = corpus_eval(triples, config, lengths)
    sys.stdout.write(report.to_table(by_layer=args.by_layer, by_length=args.by_length))
    if args.report:
        with atomic_writer(args.report) as fh:
            fh.write(report.to_json())
    if args.csv:
        with atomic_writer(args.csv) as fh:
            fh.write(report.to_csv())
    return EXIT_OK


def cmd_stats(args) -> int:
    trees = []
    for lineno, rec in read_jsonl(args.input):
        field = args.field
        if field is None:
            field = next((f for f in ("pred_tree", "gold_tree", "silver_tree") if f in rec), None)
        if not isinstance(rec, dict) or field is None or field not in rec:
            raise CorpusError(f"{args.input}:{lineno}: no tree field")
        try:
            trees.append(parse_tree(rec[field]))
        except (TreeError, TypeError) as e:
            raise CorpusError(f"{args.input}:{lineno}: {e}") from None
    dist = shape_distribution(trees)
    lines = ["leaves,shapes"] + [f"{n},{c}" for n, c in dist.items()]
    sys.stdout.write("\n".join(lines) + "\n")
    if args.csv:
        with atomic_writer(args.csv) as fh:
            fh.write("\n".join(lines) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="macrodt", description="Build and evaluate macro discourse trees from topic-segmentation signals.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    scorer_help = "score source: file:PATH (probability JSONL), lexical[:WINDOW], or extern:CMD"

    b = sub.add_parser("build", help="predict a tree for every document")
    b.add_argument("-i", "--input", required=True, help="document JSONL")
    b.add_argument("-o", "--output", required=True, help="prediction JSONL to write ({id, pred_tree})")
    b.add_argument("--method", choices=sorted(METHOD_NEEDS), default="result-convert", help="tree builder (default: result-convert)")
    b.add_argument("--mode", choices=sorted(MODE_NAMES), help="blink decoding direction: bi, down or up (default: bi)")
    b.add_argument("--threshold", type=float, help="shift-reduce: reduce when coherence >= this (default: 0.5)")
    b.add_argument("--scorer", required=True, help=scorer_help)
    b.add_argument("--jobs", type=int, default=1, help="worker threads; output order follows input order")
    b.set_defaults(func=cmd_build)

    for name, default_folds, text in (
        ("oracle-annotate", None, "attach oracle-annotated silver trees"),
        ("silver-gen", 10, "k-fold silver corpus generation"),
    ):
        o = sub.add_parser(name, help=text)
        o.add_argument("-i", "--input", required=True, help="document JSONL with topic_boundaries")
        o.add_argument("-o", "--output", required=True, help="manifest JSONL to write")
        o.add_argument("--scorer", required=True, help=scorer_help + "; '{fold}' is replaced by the fold index")
        o.add_argument("--folds", type=int, default=default_folds, help="number of folds; each fold is scored by its own scorer")
        o.add_argument("--seed", type=int, default=0, help="fold shuffling seed (default: 0)")
        o.add_argument("--verify", action="store_true", help="re-check every silver tree against the topic boundaries")
        o.add_argument("--jobs", type=int, default=1, help="worker threads")
        o.set_defaults(func=cmd_oracle)

    e = sub.add_parser("evaluate", help="span accuracy of predictions against reference trees")
    e.add_argument("--pred", required=True, help="prediction JSONL")
    e.add_argument("--gold", required=True, help="document JSONL holding the reference trees")
    e.add_argument("--gold-field", choices=("gold_tree", "silver_tree"), default="gold_tree", help="which tree to score against")
    e.add_argument("--exclude-root", action="store_true", help="do not count the root span")
    e.add_argument("--by-layer", action="store_true", help="print the top2/middle/bottom2 breakdown")
    e.add_argument("--by-length", action="store_true", help="print the paragraph-count breakdown")
    e.add_argument("--length-edges", default="2,5,8,11", help="lower edges of the length buckets (default: 2,5,8,11)")
    e.add_argument("--report", help="write the full report as JSON")
    e.add_argument("--csv", help="write bucket series as CSV")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("stats", help="distinct tree shapes per leaf count")
    s.add_argument("-i", "--input", required=True, help="JSONL with tree fields")
    s.add_argument("--field", choices=("pred_tree", "gold_tree", "silver_tree"), help="tree field (default: first present)")
    s.add_argument("--csv", help="also write the table as CSV")
    s.set_defaults(func=cmd_stats)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError("--jobs must be at least 1")
    except ConfigError as e:
        print(f"macrodt: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"macrodt: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SilverGenError as e:
        cause = e.__cause__
        code = EXIT_SCORER if isinstance(cause, ScorerError) else EXIT_DATA
        if isinstance(cause, ConfigError):
            code = EXIT_CONFIG
        print(f"macrodt: error: {e}", file=sys.stderr)
        return code
    except ScorerError as e:
        print(f"macrodt: scorer error: {e}", file=sys.stderr)
        return EXIT_SCORER
    except DATA_ERRORS as e:
        print(f"macrodt: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as e:
        print(f"macrodt: error: file not found: {e.filename}", file=sys.stderr)
        return EXIT_CONFIG


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
