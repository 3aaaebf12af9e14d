"""Command-line entry point: ``beamstrike attack|sweep|analyze``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import rpc
from .analysis import IoFailure, TaggerUnavailable, remote_tagger
from .beam import ConfigInvalid
from .data import DatasetInvalid
from .runner import EXIT_INVALID, NoSuccessfulSamples, run_analysis, run_attack, run_sweep

EXIT_ANALYSIS = 4


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the configured seed")
    common.add_argument("--workers", type=int, default=1, help="samples attacked concurrently")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="beamstrike", description="Word-level beam search attacks on text classifiers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", parents=[common], help="attack every sample of a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-queries", type=int, default=None, help="override the per-sample query budget")

    p = sub.add_parser("sweep", parents=[common], help="run a hyperparameter grid")
    p.add_argument("--spec", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-queries", type=int, default=None)

    p = sub.add_parser("analyze", parents=[common], help="POS and WSR analysis of attack outcomes")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tagger-url", default=None, help="remote tagger endpoint; the built-in rule tagger otherwise")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "attack":
            return run_attack(args.config, args.dataset, args.out, seed=args.seed,
                              workers=args.workers, max_queries=args.max_queries).exit_status
        if args.command == "sweep":
            return run_sweep(args.spec, args.dataset, args.out, seed=args.seed,
                             workers=args.workers, max_queries=args.max_queries).exit_status
        tagger = remote_tagger({"transport": "http", "url": args.tagger_url}) if args.tagger_url else None
        return run_analysis(args.inputs, args.out, tagger=tagger, workers=args.workers).exit_status
    except (ConfigInvalid, DatasetInvalid) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (IoFailure, NoSuccessfulSamples, TaggerUnavailable, rpc.TransportError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
