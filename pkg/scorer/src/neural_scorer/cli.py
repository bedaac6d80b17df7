"""Command line entry points: prepare, train, serve.

Exit codes: 0 on success, 1 on an operational failure (unreadable model,
bad training data, transport error), 2 on usage errors (argparse).
"""

from __future__ import annotations

import argparse
import json
import sys

from .data import load_examples, prepare_training_data, save_examples
from .errors import ScorerServiceError
from .model import SpanLabelModel
from .server import ScorerSession, serve_stdio, serve_tcp
from .training import train

EXIT_OK = 0
EXIT_FAILURE = 1


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _cmd_prepare(args) -> int:
    examples = prepare_training_data(args.input, lemir_cmd=args.lemir_cmd)
    save_examples(args.output, examples)
    n_spans = sum(len(ex.positives) for ex in examples)
    print(f"prepared {len(examples)} sentences, {n_spans} labeled spans", file=sys.stderr)
    return EXIT_OK


def _cmd_train(args) -> int:
    examples = load_examples(args.input)
    model = SpanLabelModel.init(dim=args.dim, scale=args.scale, seed=args.seed)
    losses = train(
        model,
        examples,
        epochs=args.epochs,
        lr=args.lr,
        seed=args.seed,
        max_negatives=args.max_negatives,
    )
    model.save(args.output)
    if losses:
        print(
            f"trained {args.epochs} epochs on {len(examples)} sentences, "
            f"loss {losses[0]:.4f} -> {losses[-1]:.4f}",
            file=sys.stderr,
        )
    else:
        print("trained 0 epochs", file=sys.stderr)
    return EXIT_OK


def _cmd_serve(args) -> int:
    try:
        model = SpanLabelModel.load(args.model)
    except ScorerServiceError as exc:
        if args.transport == "stdio":
            # a connected peer expects a line; a non-handshake error line
            # tells it the handshake failed rather than leaving it hanging
            line = json.dumps({"type": "error", "request_id": None, "message": str(exc)})
            print(line, flush=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    session = ScorerSession(model, max_len=args.max_len, device=args.device)
    if args.transport == "stdio":
        return serve_stdio(session)
    def announce(port):
        print(f"listening on {args.host}:{port}", file=sys.stderr)
    return serve_tcp(session, args.host, args.port, on_bound=announce)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neural-scorer",
        description="span-label scorer speaking the glilem-scorer protocol",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    prepare = sub.add_parser("prepare", help="build training examples from a treebank")
    prepare.add_argument("--input", required=True, help="CoNLL-U file with lemmas")
    prepare.add_argument("--output", required=True, help="examples JSONL output path")
    prepare.add_argument(
        "--lemir-cmd",
        default="lemir",
        help="command for the lemmatizer toolkit CLI (default: lemir)",
    )
    prepare.set_defaults(func=_cmd_prepare)

    fit = sub.add_parser("train", help="fit a scorer model on prepared examples")
    fit.add_argument("--input", required=True, help="examples JSONL from prepare")
    fit.add_argument("--output", required=True, help="model JSON output path")
    fit.add_argument("--dim", type=_positive_int, default=64, help="embedding width")
    fit.add_argument("--scale", type=float, default=4.0, help="logit scale")
    fit.add_argument("--epochs", type=_positive_int, default=10)
    fit.add_argument("--lr", type=float, default=0.1)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--max-negatives", type=_positive_int, default=4)
    fit.set_defaults(func=_cmd_train)

    serve = sub.add_parser("serve", help="answer score requests over stdio or tcp")
    serve.add_argument("--model", required=True, help="model JSON path")
    serve.add_argument("--transport", choices=("stdio", "tcp"), default="stdio")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=9400)
    serve.add_argument("--max-len", type=_positive_int, default=512)
    serve.add_argument("--device", default="cpu", help="compute device (cpu only)")
    serve.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScorerServiceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except KeyboardInterrupt:
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
