"""Command-line interface exposing the whole pipeline as subcommands.

Exit codes: 0 success, 1 usage error, 2 data error, 3 scorer or protocol
error.  Diagnostics go to stderr; data goes to files or stdout.  Most
numeric flags fall back to LEMIR_* environment variables (see --help).
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from typing import Callable, Sequence

from . import editscript
from .candidates import (
    CandidateLattice,
    DictionaryGenerator,
    build_dictionary_generator,
    generate_candidates,
    import_candidates,
)
from .corpus_io import (
    Sentence,
    load_jsonl_corpus,
    load_qrels,
    load_run,
    parse_conllu,
    write_run,
)
from .disambig import (
    FrequencyModel,
    HmmModel,
    ReferenceSpanScorer,
    ScoreMatrixError,
    ScorerInvocationError,
    SpanMatcherConfig,
    freq_disambiguate,
    hmm_disambiguate,
    oracle_disambiguate,
    span_match_disambiguate,
    train_frequency,
    train_hmm,
)
from .errors import InvalidInputError, LemirError
from .ireval import evaluate_run, metrics_to_json, metrics_to_table
from .lemeval import (
    bootstrap_ci,
    lemmatize_text,
    reports_to_json,
    reports_to_table,
    score_sentences,
)
from .retrieval import (
    build_index,
    identity_pipeline,
    lemmatizer_pipeline,
    load_index,
    save_index,
    search,
    stemmer_pipeline,
)
from .scorer_bridge import ScorerClient, ScorerError, connect_stdio, connect_tcp

MODEL_FORMAT = "lemir-model"
MODEL_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SCORER = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _env(name: str, fallback: str) -> str:
    return os.environ.get("LEMIR_" + name, fallback)


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value < 1:
        raise argparse.ArgumentTypeError(f"{value} must be >= 1")
    return value


def _any_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number")
    if value <= 0:
        raise argparse.ArgumentTypeError(f"{value} must be > 0")
    return value


def _unit_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number")
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"{value} must be in [0, 1]")
    return value


def _open_level_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number")
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"{value} must be in (0, 1)")
    return value


def _ks_list(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated int list")
    if not ks or any(k < 1 for k in ks):
        raise argparse.ArgumentTypeError("every k must be >= 1")
    return ks


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as handle:
        return handle.read()


def _read_lines(path: str) -> list[str]:
    if path == "-":
        return sys.stdin.readlines()
    with open(path, encoding="utf-8") as handle:
        return handle.readlines()


def _write_text(path: str, content: str) -> None:
    if path == "-":
        sys.stdout.write(content)
    else:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(content)


def save_model(path: str, kind: str, generator: DictionaryGenerator, model) -> None:
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": kind,
        "generator": generator.to_dict(),
        "model": model.to_dict(),
    }
    content = json.dumps(payload, ensure_ascii=False, sort_keys=True) + "\n"
    _write_text(path, content)


def load_model(path: str) -> tuple[str, DictionaryGenerator, FrequencyModel | HmmModel]:
    with open(path, encoding="utf-8") as handle:
        try:
            payload = json.load(handle)
        except ValueError as exc:
            raise InvalidInputError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise InvalidInputError(f"{path}: not a {MODEL_FORMAT} file")
    if payload.get("version") != MODEL_VERSION:
        raise InvalidInputError(f"{path}: unsupported model version {payload.get('version')!r}")
    kind = payload.get("kind")
    try:
        generator = DictionaryGenerator.from_dict(payload["generator"])
        if kind == "freq":
            model = FrequencyModel.from_dict(payload["model"])
        elif kind == "hmm":
            model = HmmModel.from_dict(payload["model"])
        else:
            raise InvalidInputError(f"{path}: unknown model kind {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"{path}: bad model contents: {exc}") from exc
    return kind, generator, model


def _load_gold(path: str) -> list[Sentence]:
    return parse_conllu(_read_lines(path))


def _make_scorer(
    spec_text: str, config: SpanMatcherConfig
) -> tuple[Callable, ScorerClient | None]:
    """Build the span scorer named by --scorer; returns (callable, client)."""
    if spec_text == "reference":
        return ReferenceSpanScorer(config), None
    if spec_text.startswith("cmd:"):
        command = shlex.split(spec_text[len("cmd:") :])
        if not command:
            raise InvalidInputError("empty scorer command")
        client = connect_stdio(command)
        return client.as_scorer(), client
    if spec_text.startswith("tcp:"):
        rest = spec_text[len("tcp:") :]
        host, sep, port_text = rest.rpartition(":")
        if not sep or not host:
            raise InvalidInputError(f"bad tcp scorer address {rest!r}")
        try:
            port = int(port_text)
        except ValueError as exc:
            raise InvalidInputError(f"bad tcp port {port_text!r}") from exc
        client = connect_tcp(host, port)
        return client.as_scorer(), client
    raise InvalidInputError(
        f"unknown scorer {spec_text!r}; use reference, cmd:<command>, or tcp:<host>:<port>"
    )


def _disambiguator_for(
    kind: str, model, method: str, scorer, config: SpanMatcherConfig
) -> Callable[[CandidateLattice], object]:
    if method == "freq":
        if kind != "freq":
            raise InvalidInputError(f"method freq needs a freq model, got {kind!r}")
        return lambda lattice: freq_disambiguate(model, lattice)
    if method == "hmm":
        if kind != "hmm":
            raise InvalidInputError(f"method hmm needs an hmm model, got {kind!r}")
        return lambda lattice: hmm_disambiguate(model, lattice)
    if method == "span":
        return lambda lattice: span_match_disambiguate(lattice, scorer, config)
    raise InvalidInputError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# subcommand implementations
# --------------------------------------------------------------------------


def _cmd_rules_stats(args) -> int:
    sentences = _load_gold(args.input)
    pairs = [
        (token.form, token.lemma)
        for sentence in sentences
        for token in sentence.tokens
        if token.lemma is not None
    ]
    table = editscript.rule_frequency_table(pairs)
    if args.top is not None:
        table = dict(list(table.items())[: args.top])
    _write_text(args.output, editscript.frequency_table_tsv(table))
    print(f"{len(pairs)} tokens, {len(table)} rules", file=sys.stderr)
    return EXIT_OK


def _cmd_rules_roundtrip(args) -> int:
    sentences = _load_gold(args.input)
    checked = 0
    failures = 0
    detail_lines = []
    for sentence in sentences:
        for index, token in enumerate(sentence.tokens):
            if token.lemma is None:
                continue
            rule = editscript.extract_rule(token.form, token.lemma)
            produced = editscript.apply_rule(token.form, rule)
            ok = produced == token.lemma
            checked += 1
            if not ok:
                failures += 1
            if args.details:
                detail_lines.append(
                    f"{sentence.sentence_id}\t{index}\t{token.form}\t{token.lemma}"
                    f"\t{editscript.format_rule(rule)}\t{'ok' if ok else 'FAIL'}\n"
                )
    if args.details:
        _write_text(args.output, "".join(detail_lines))
    print(f"checked {checked} tokens: {failures} round-trip failures", file=sys.stderr)
    return EXIT_OK if failures == 0 else EXIT_DATA


def _cmd_train(args) -> int:
    gold = _load_gold(args.input)
    generator = build_dictionary_generator(gold)
    lattices = [generate_candidates(generator, sentence) for sentence in gold]
    if args.model_kind == "freq":
        model = train_frequency(lattices, gold)
    else:
        model = train_hmm(lattices, gold, alpha=args.alpha, beta=args.beta)
    save_model(args.output, args.model_kind, generator, model)
    print(f"trained {args.model_kind} model on {len(gold)} sentences", file=sys.stderr)
    return EXIT_OK


def _cmd_lemmatize(args) -> int:
    kind, generator, model = load_model(args.model)
    config = SpanMatcherConfig(threshold=args.tau)
    scorer = None
    client = None
    if args.method == "span":
        scorer, client = _make_scorer(args.scorer, config)
    try:
        disambiguate = _disambiguator_for(kind, model, args.method, scorer, config)
        out_lines = []
        for line in _read_text(args.input).splitlines():
            for form, lemma in lemmatize_text(line, generator, disambiguate):
                out_lines.append(f"{form}\t{lemma}\n")
            out_lines.append("\n")
        _write_text(args.output, "".join(out_lines))
    finally:
        if client is not None:
            client.close()
    return EXIT_OK


def _cmd_eval_lemma(args) -> int:
    gold = _load_gold(args.input)
    kind, generator, model = load_model(args.model)
    if args.candidates is not None:
        lattices = import_candidates(_read_lines(args.candidates), reference=gold)
    else:
        lattices = [generate_candidates(generator, s) for s in gold]
    methods = args.method or ["freq"]
    config = SpanMatcherConfig(threshold=args.tau)
    scorer = None
    client = None
    if "span" in methods:
        scorer, client = _make_scorer(args.scorer, config)
    try:
        reports = []
        for method in methods:
            predictions = []
            for lattice, sentence in zip(lattices, gold):
                if method == "oracle":
                    result = oracle_disambiguate(lattice, sentence)
                else:
                    disambiguate = _disambiguator_for(kind, model, method, scorer, config)
                    result = disambiguate(lattice)
                predictions.append(result.lemmas)
            stats = score_sentences(predictions, gold)
            reports.append(
                bootstrap_ci(
                    stats,
                    method=method,
                    replicates=args.replicates,
                    level=args.level,
                    seed=args.seed,
                    jobs=args.jobs,
                )
            )
    finally:
        if client is not None:
            client.close()
    if args.format == "json":
        _write_text(args.output, reports_to_json(reports))
    else:
        _write_text(args.output, reports_to_table(reports, level=args.level))
    return EXIT_OK


def _build_pipeline(args, for_index_meta: dict | None = None):
    meta = for_index_meta or {}
    pipeline_kind = args.pipeline if for_index_meta is None else meta.get("kind", "identity")
    if pipeline_kind == "identity":
        return identity_pipeline()
    if pipeline_kind == "stemmer":
        if for_index_meta is None:
            if args.suffixes is None:
                raise InvalidInputError("stemmer pipeline needs --suffixes")
            suffixes = [line.strip() for line in _read_lines(args.suffixes) if line.strip()]
            min_stem = args.min_stem
        else:
            suffixes = meta.get("suffixes", [])
            min_stem = int(meta.get("min_stem", 3))
        return stemmer_pipeline(suffixes, min_stem=min_stem)
    if pipeline_kind == "lemmatizer":
        model_path = args.model if args.model is not None else meta.get("model")
        if not model_path:
            raise InvalidInputError("lemmatizer pipeline needs --model")
        kind, generator, model = load_model(model_path)
        disambiguate = _disambiguator_for(kind, model, kind, None, SpanMatcherConfig())
        return lemmatizer_pipeline(generator, disambiguate, model_path=model_path)
    raise InvalidInputError(f"unknown pipeline {pipeline_kind!r}")


def _cmd_index_build(args) -> int:
    documents = list(load_jsonl_corpus(_read_lines(args.input)))
    pipeline = _build_pipeline(args)
    index = build_index(documents, pipeline, k1=args.k1, b=args.b, jobs=args.jobs)
    save_index(index, args.output)
    print(
        f"indexed {index.doc_count} documents, {len(index.postings)} terms",
        file=sys.stderr,
    )
    return EXIT_OK


def _cmd_search(args) -> int:
    index = load_index(args.index)
    pipeline = _build_pipeline(args, for_index_meta=index.pipeline_meta)
    run: dict[str, list[tuple[str, float]]] = {}
    for lineno, raw in enumerate(_read_lines(args.queries), start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        qid, sep, text = line.partition("\t")
        if not sep:
            raise InvalidInputError(f"queries line {lineno}: expected qid<TAB>text")
        run[qid] = search(index, pipeline.normalize(text), k=args.top_k)
    if args.output == "-":
        write_run(run, sys.stdout, tag=args.tag)
    else:
        with open(args.output, "w", encoding="utf-8") as handle:
            write_run(run, handle, tag=args.tag)
    print(f"searched {len(run)} queries", file=sys.stderr)
    return EXIT_OK


def _cmd_eval_ir(args) -> int:
    qrels = load_qrels(_read_lines(args.qrels))
    reports = []
    for run_path in args.run:
        run = load_run(_read_lines(run_path))
        name = os.path.basename(run_path)
        reports.append(evaluate_run(run, qrels, ks=args.ks, name=name))
    if args.format == "json":
        _write_text(args.output, metrics_to_json(reports))
    else:
        _write_text(args.output, metrics_to_table(reports))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lemir", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    rules = sub.add_parser("rules", help="transformation-rule utilities")
    rules_sub = rules.add_subparsers(dest="rules_command", required=True)

    stats = rules_sub.add_parser("stats", help="rule frequency table from CoNLL-U")
    stats.add_argument("--input", required=True, help="CoNLL-U file, - for stdin")
    stats.add_argument("--output", default="-", help="TSV output path (default stdout)")
    stats.add_argument("--top", type=_positive_int, default=None, help="keep top N rules")
    stats.set_defaults(func=_cmd_rules_stats)

    roundtrip = rules_sub.add_parser("roundtrip", help="verify apply(extract) on a treebank")
    roundtrip.add_argument("--input", required=True, help="CoNLL-U file, - for stdin")
    roundtrip.add_argument("--details", action="store_true", help="emit per-token TSV")
    roundtrip.add_argument("--output", default="-", help="details output path")
    roundtrip.set_defaults(func=_cmd_rules_roundtrip)

    train = sub.add_parser("train", help="train a disambiguation model")
    train_sub = train.add_subparsers(dest="model_kind", required=True)
    for kind in ("freq", "hmm"):
        tp = train_sub.add_parser(kind)
        tp.add_argument("--input", required=True, help="CoNLL-U training data")
        tp.add_argument("--output", required=True, help="model JSON path")
        if kind == "hmm":
            tp.add_argument("--alpha", type=_positive_float, default=_env("ALPHA", "0.1"))
            tp.add_argument("--beta", type=_positive_float, default=_env("BETA", "0.01"))
        tp.set_defaults(func=_cmd_train, model_kind=kind)

    lemmatize = sub.add_parser("lemmatize", help="lemmatize plain text line by line")
    lemmatize.add_argument("--model", default=_env("MODEL", None), required="LEMIR_MODEL" not in os.environ)
    lemmatize.add_argument("--input", default="-", help="text file, - for stdin")
    lemmatize.add_argument("--output", default="-")
    lemmatize.add_argument("--method", choices=("freq", "hmm", "span"), default="freq")
    lemmatize.add_argument("--scorer", default=_env("SCORER", "reference"))
    lemmatize.add_argument("--tau", type=_unit_float, default=_env("TAU", "0.5"))
    lemmatize.set_defaults(func=_cmd_lemmatize)

    eval_lemma = sub.add_parser("eval-lemma", help="accuracy with bootstrap intervals")
    eval_lemma.add_argument("--input", required=True, help="gold CoNLL-U")
    eval_lemma.add_argument("--model", default=_env("MODEL", None), required="LEMIR_MODEL" not in os.environ)
    eval_lemma.add_argument(
        "--method",
        action="append",
        choices=("oracle", "freq", "hmm", "span"),
        help="repeatable; default freq",
    )
    eval_lemma.add_argument("--candidates", default=None, help="imported candidate JSONL")
    eval_lemma.add_argument("--scorer", default=_env("SCORER", "reference"))
    eval_lemma.add_argument("--tau", type=_unit_float, default=_env("TAU", "0.5"))
    eval_lemma.add_argument("--replicates", "-B", type=_positive_int, default=_env("REPLICATES", "1000"))
    eval_lemma.add_argument("--level", type=_open_level_float, default=_env("LEVEL", "0.95"))
    eval_lemma.add_argument("--seed", type=_any_int, default=_env("SEED", "42"))
    eval_lemma.add_argument("--jobs", type=_positive_int, default=_env("JOBS", str(os.cpu_count() or 1)))
    eval_lemma.add_argument("--format", choices=("json", "table"), default="json")
    eval_lemma.add_argument("--output", default="-")
    eval_lemma.set_defaults(func=_cmd_eval_lemma)

    index = sub.add_parser("index", help="inverted index commands")
    index_sub = index.add_subparsers(dest="index_command", required=True)
    ib = index_sub.add_parser("build")
    ib.add_argument("--input", required=True, help="JSONL corpus (doc_id/title/text)")
    ib.add_argument("--output", required=True, help="index JSON path")
    ib.add_argument("--pipeline", choices=("identity", "stemmer", "lemmatizer"), default="identity")
    ib.add_argument("--suffixes", default=None, help="suffix list file for the stemmer")
    ib.add_argument("--min-stem", type=_positive_int, default=3)
    ib.add_argument("--model", default=_env("MODEL", None), help="model for the lemmatizer pipeline")
    ib.add_argument("--k1", type=_positive_float, default=_env("K1", "1.5"))
    ib.add_argument("--b", type=_unit_float, default=_env("B", "0.75"))
    ib.add_argument("--jobs", type=_positive_int, default=_env("JOBS", str(os.cpu_count() or 1)))
    ib.set_defaults(func=_cmd_index_build)

    search_p = sub.add_parser("search", help="run queries against an index")
    search_p.add_argument("--index", default=_env("INDEX", None), required="LEMIR_INDEX" not in os.environ)
    search_p.add_argument("--queries", required=True, help="TSV qid<TAB>query text")
    search_p.add_argument("--model", default=_env("MODEL", None), help="override the index's model path")
    search_p.add_argument("--top-k", type=_positive_int, default=_env("TOP_K", "100"))
    search_p.add_argument("--output", default="-", help="TREC run output")
    search_p.add_argument("--tag", default="lemir")
    search_p.set_defaults(func=_cmd_search)

    eval_ir = sub.add_parser("eval-ir", help="IR metrics from run and qrels")
    eval_ir.add_argument("--qrels", required=True)
    eval_ir.add_argument("--run", nargs="+", required=True, help="one or more TREC run files")
    eval_ir.add_argument("--ks", type=_ks_list, default=_env("KS", "1,5,100"))
    eval_ir.add_argument("--format", choices=("json", "table"), default="json")
    eval_ir.add_argument("--output", default="-")
    eval_ir.set_defaults(func=_cmd_eval_ir)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScorerError, ScorerInvocationError, ScoreMatrixError) as exc:
        print(f"lemir: scorer error: {exc}", file=sys.stderr)
        return EXIT_SCORER
    except (LemirError, OSError) as exc:
        print(f"lemir: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
