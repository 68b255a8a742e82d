"""Command-line entry point.

Subcommands cover the full workflow: ``align`` trains lexical tables and
dumps Viterbi alignments, ``generate`` decodes pseudo-references under a
wait-k schedule, ``filter`` selects the best-scoring ones and optionally
augments the corpus, and ``metrics`` computes anticipation rates,
hallucination rates, BLEU, and score histograms.

Exit codes: 0 success, 1 data error, 2 usage or I/O error, 3 model
protocol error. Progress goes to stderr; data only to files or stdout.
"""

from __future__ import annotations

import argparse
import os
import re
import sys

from . import aligner, corpus, metrics, pipeline
from .decoder import DecodeError, LexicalModel
from .wire import DEFAULT_TIMEOUT, ExternalModelClient, ModelProtocolError

_TCP_ENDPOINT_RE = re.compile(r"^([\w.\-]+):(\d+)$")


def _progress(message: str) -> None:
    print(f"refsmith: {message}", file=sys.stderr)


def _require_files(*paths) -> None:
    for path in paths:
        if path is not None and not os.path.isfile(path):
            raise FileNotFoundError(f"no such file: {path}")


def _load_config(path) -> dict[str, str]:
    _require_files(path)
    return pipeline.read_manifest(path)


def _resolve(args, name: str, default, cast=str):
    """Flag value, else config-file value, else the hard default."""
    value = getattr(args, name.replace("-", "_"))
    if value is not None:
        return value
    config = getattr(args, "_config", {})
    if name in config:
        return cast(config[name])
    return default


def _parse_model_spec(spec: str, timeout: float):
    """Build a per-worker model factory from builtin:TABLE or external:...

    external endpoints are either HOST:PORT or a shell command line.
    """
    kind, sep, rest = spec.partition(":")
    if not sep or not rest:
        raise argparse.ArgumentTypeError(
            f"bad model spec {spec!r}; expected builtin:TABLE, "
            "external:CMD, or external:HOST:PORT"
        )
    if kind == "builtin":
        _require_files(rest)
        model = LexicalModel(table=aligner.load_table(rest))
        return lambda: model
    if kind == "external":
        endpoint = _TCP_ENDPOINT_RE.match(rest)
        if endpoint:
            host, port = endpoint.group(1), int(endpoint.group(2))
            return lambda: ExternalModelClient.connect(host, port, timeout)
        return lambda: ExternalModelClient.spawn(rest, timeout)
    raise argparse.ArgumentTypeError(f"unknown model kind {kind!r}")


def cmd_align(args) -> int:
    _require_files(args.source, args.target)
    pairs = corpus.load_parallel_corpus(args.source, args.target)
    config = aligner.EmConfig(
        iterations=_resolve(args, "iterations", aligner.DEFAULT_ITERATIONS, int),
        null_weight=_resolve(args, "null-weight", aligner.DEFAULT_NULL_WEIGHT, float),
        min_prob=_resolve(args, "min-prob", aligner.DEFAULT_MIN_PROB, float),
    )
    use_null = not args.no_null
    _progress(f"training {args.model} on {len(pairs)} pairs "
              f"({config.iterations} EM iterations)")
    if args.model == "model2":
        params = aligner.train_model2_diag(pairs, config)
        aligner.save_table(args.table_out, params.table, tension=params.tension)
        if args.viterbi_out:
            alignments = [aligner.model2_viterbi_align(p, params, use_null=use_null)
                          for p in pairs]
            corpus.write_alignment_file(args.viterbi_out, alignments)
    else:
        table = aligner.train_model1(pairs, config)
        aligner.save_table(args.table_out, table)
        if args.viterbi_out:
            alignments = [aligner.viterbi_align(p, table, use_null=use_null)
                          for p in pairs]
            corpus.write_alignment_file(args.viterbi_out, alignments)
    _progress(f"wrote table to {args.table_out}")
    return 0


def cmd_generate(args) -> int:
    _require_files(args.source, args.target)
    pairs = corpus.load_parallel_corpus(args.source, args.target)
    timeout = _resolve(args, "timeout", DEFAULT_TIMEOUT, float)
    beam = _resolve(args, "beam", 5, int)
    workers = _resolve(args, "workers", os.cpu_count() or 1, int)
    model_factory = _parse_model_spec(args.model, timeout)
    run = pipeline.GenerationRun(
        k=args.k, beam_size=beam, workers=workers, model_id=args.model,
        source_path=str(args.source), target_path=str(args.target),
    )
    _progress(f"generating wait-{args.k} pseudo-references for {len(pairs)} "
              f"sentences (beam {beam}, {workers} workers)")
    scored = pipeline.generate_pseudo_refs(pairs, run, model_factory)
    pseudo_path = args.out_prefix + ".pseudo"
    scores_path = args.out_prefix + ".scores"
    manifest_path = args.out_prefix + ".manifest"
    with open(pseudo_path, "w", encoding="utf-8", newline="\n") as fh:
        for item in scored:
            fh.write(" ".join(item.pseudo_target) + "\n")
    corpus.write_score_table(scores_path, scored)
    entries = pipeline.manifest_entries(run, generated=len(scored), extras={
        "pseudo_path": pseudo_path,
        "scores_path": scores_path,
    })
    pipeline.write_manifest(manifest_path, entries)
    _progress(f"generated {len(scored)} pseudo-references, "
              f"{len(run.failures)} failures; manifest at {manifest_path}")
    return 3 if run.failures else 0


def cmd_filter(args) -> int:
    _require_files(*args.scores)
    if args.augment_out_prefix:
        if not (args.source and args.target):
            raise argparse.ArgumentTypeError(
                "--augment-out-prefix requires --source and --target")
        _require_files(args.source, args.target)
    scored = []
    for path in args.scores:
        scored.extend(corpus.load_score_table(path))
    min_bleu = _resolve(args, "min-bleu", None, float)
    if min_bleu is not None:
        policy = pipeline.FilterPolicy(mode=pipeline.MIN_BLEU,
                                       min_bleu=min_bleu)
    else:
        fraction = _resolve(args, "top-fraction", 0.4, float)
        policy = pipeline.FilterPolicy(mode=pipeline.TOP_FRACTION,
                                       top_fraction=fraction)
    selected = pipeline.filter_top(scored, policy)
    corpus.write_score_table(args.selected_out, selected)
    _progress(f"selected {len(selected)} of {len(scored)} pseudo-references")
    if args.augment_out_prefix:
        original = corpus.load_parallel_corpus(args.source, args.target)
        augmented = pipeline.augment_corpus(original, selected)
        src_out = args.augment_out_prefix + ".src"
        tgt_out = args.augment_out_prefix + ".tgt"
        corpus.write_parallel_corpus(augmented, src_out, tgt_out)
        _progress(f"wrote augmented corpus ({len(augmented)} pairs) "
                  f"to {src_out} / {tgt_out}")
    return 0


def cmd_metrics_ar(args) -> int:
    _require_files(args.source, args.target, args.alignments)
    pairs = corpus.load_parallel_corpus(args.source, args.target)
    alignments = corpus.load_alignment_file(args.alignments, pairs)
    k_values = [int(v) for v in args.k.split(",")]
    for k in k_values:
        if k < 1:
            raise pipeline.PipelineError(f"k must be >= 1, got {k}")
        report = metrics.anticipation_report(pairs, alignments, k)
        out_path = f"{args.report_prefix}.k{k}.tsv"
        metrics.write_rate_report(out_path, report.per_sentence,
                                  report.corpus_mean)
        print(f"AR_{k}\t{report.corpus_mean:.6f}")
    return 0


def cmd_metrics_hr(args) -> int:
    _require_files(args.source, args.hyp, args.table)
    pairs = corpus.load_parallel_corpus(args.source, args.hyp)
    table = aligner.load_table(args.table)
    alignments = [aligner.viterbi_align(p, table) for p in pairs]
    report = metrics.hallucination_report(
        [p.target for p in pairs], alignments, [p.id for p in pairs])
    if args.report_out:
        metrics.write_rate_report(args.report_out, report.per_sentence,
                                  report.corpus_mean)
    print(f"HR\t{report.corpus_mean:.6f}")
    return 0


def cmd_metrics_bleu(args) -> int:
    _require_files(args.candidates, *args.ref)
    candidate_sents = []
    with open(args.candidates, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            candidate_sents.append(corpus.parse_sentence_line(
                line, path=args.candidates, lineno=lineno))
    reference_files = []
    for path in args.ref:
        with open(path, encoding="utf-8") as fh:
            sents = [corpus.parse_sentence_line(line, path=path, lineno=i)
                     for i, line in enumerate(fh, start=1)]
        if len(sents) != len(candidate_sents):
            raise corpus.CorpusFormatError(
                f"line-count mismatch: {args.candidates} has "
                f"{len(candidate_sents)} lines, {path} has {len(sents)}")
        reference_files.append(sents)
    reference_sets = list(zip(*reference_files))
    score = metrics.corpus_bleu(candidate_sents, reference_sets)
    print(f"BLEU\t{score:.6f}")
    if args.sentence_out:
        rows = [
            (i, metrics.sentence_bleu(cand, refs))
            for i, (cand, refs) in enumerate(zip(candidate_sents, reference_sets),
                                             start=1)
        ]
        mean = sum(v for _, v in rows) / len(rows)
        metrics.write_rate_report(args.sentence_out, rows, mean)
    return 0


def cmd_metrics_hist(args) -> int:
    _require_files(args.scores)
    scored = corpus.load_score_table(args.scores)
    width = _resolve(args, "bin-width", 5.0, float)
    bins = metrics.bleu_histogram([s.bleu for s in scored], width)
    metrics.write_histogram(args.out, bins)
    _progress(f"wrote {len(bins)} bins to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="refsmith",
        description="Generate, filter, and measure monotonic pseudo-references "
                    "for simultaneous translation corpora.",
    )
    parser.add_argument("--config", help="flat key=value file supplying "
                        "defaults; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    p_align = sub.add_parser("align", help="train a lexical table by EM")
    p_align.add_argument("--source", required=True)
    p_align.add_argument("--target", required=True)
    p_align.add_argument("--model", choices=["model1", "model2"],
                         default="model1")
    p_align.add_argument("--iterations", type=int, default=None)
    p_align.add_argument("--null-weight", type=float, default=None)
    p_align.add_argument("--min-prob", type=float, default=None)
    p_align.add_argument("--table-out", required=True)
    p_align.add_argument("--viterbi-out")
    p_align.add_argument("--no-null", action="store_true",
                         help="disallow NULL links in Viterbi output")
    p_align.set_defaults(func=cmd_align)

    p_gen = sub.add_parser("generate",
                           help="decode wait-k pseudo-references")
    p_gen.add_argument("--source", required=True)
    p_gen.add_argument("--target", required=True)
    p_gen.add_argument("--k", type=int, required=True)
    p_gen.add_argument("--beam", type=int, default=None)
    p_gen.add_argument("--model", required=True,
                       help="builtin:TABLE | external:CMD | external:HOST:PORT")
    p_gen.add_argument("--workers", type=int, default=None)
    p_gen.add_argument("--timeout", type=float, default=None,
                       help="external model response timeout in seconds")
    p_gen.add_argument("--out-prefix", required=True,
                       help="writes PREFIX.pseudo, PREFIX.scores, PREFIX.manifest")
    p_gen.set_defaults(func=cmd_generate)

    p_filter = sub.add_parser("filter", help="select top pseudo-references")
    p_filter.add_argument("--scores", action="append", required=True,
                          help="score table; repeat to pool several runs")
    mode = p_filter.add_mutually_exclusive_group()
    mode.add_argument("--top-fraction", type=float, default=None)
    mode.add_argument("--min-bleu", type=float, default=None,
                      help="keep items at or above this BLEU instead of "
                           "a top fraction")
    p_filter.add_argument("--selected-out", required=True)
    p_filter.add_argument("--source")
    p_filter.add_argument("--target")
    p_filter.add_argument("--augment-out-prefix",
                          help="also write PREFIX.src / PREFIX.tgt with the "
                               "original corpus plus selected pseudo-references")
    p_filter.set_defaults(func=cmd_filter)

    p_metrics = sub.add_parser("metrics", help="anticipation, hallucination, "
                               "BLEU, and histogram reports")
    msub = p_metrics.add_subparsers(dest="submode", required=True)

    p_ar = msub.add_parser("ar", help="k-anticipation rate from alignments")
    p_ar.add_argument("--source", required=True)
    p_ar.add_argument("--target", required=True)
    p_ar.add_argument("--alignments", required=True)
    p_ar.add_argument("--k", required=True, help="comma-separated list")
    p_ar.add_argument("--report-prefix", required=True)
    p_ar.set_defaults(func=cmd_metrics_ar)

    p_hr = msub.add_parser("hr", help="hallucination rate of hypotheses")
    p_hr.add_argument("--source", required=True)
    p_hr.add_argument("--hyp", required=True)
    p_hr.add_argument("--table", required=True,
                      help="uniform-prior lexical table used for alignment")
    p_hr.add_argument("--report-out")
    p_hr.set_defaults(func=cmd_metrics_hr)

    p_bleu = msub.add_parser("bleu", help="corpus BLEU, optional per-sentence")
    p_bleu.add_argument("--candidates", required=True)
    p_bleu.add_argument("--ref", action="append", required=True,
                        help="reference file; repeat for multi-reference")
    p_bleu.add_argument("--sentence-out")
    p_bleu.set_defaults(func=cmd_metrics_bleu)

    p_hist = msub.add_parser("hist", help="BLEU histogram from a score table")
    p_hist.add_argument("--scores", required=True)
    p_hist.add_argument("--bin-width", type=float, default=None)
    p_hist.add_argument("--out", required=True)
    p_hist.set_defaults(func=cmd_metrics_hist)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args._config = _load_config(args.config) if args.config else {}
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        print(f"refsmith: usage error: {exc}", file=sys.stderr)
        return 2
    except ModelProtocolError as exc:
        print(f"refsmith: model protocol error: {exc}", file=sys.stderr)
        return 3
    except DecodeError as exc:
        print(f"refsmith: decode error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"refsmith: {exc}", file=sys.stderr)
        return 2
    except IsADirectoryError as exc:
        print(f"refsmith: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"refsmith: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"refsmith: {exc}", file=sys.stderr)
        return 2


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
