"""Command-line entry point.

Subcommands mirror the pipeline stages: ``prepare`` (split + stats),
``train`` (built-in models + hybrid), ``rank`` (hypergraph rankers),
``evaluate`` (metrics report + figure), and ``run`` (all of the above).
Exit codes: 0 success, 1 usage or configuration, 2 data, 3 numeric.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import RunConfig, default_config_json, load_config
from .errors import ConfigError, DataError, HyperecError, NumericError
from .evaluation import format_report_table
from .pipeline import (stage_evaluate, stage_prepare, stage_rank, stage_train)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to the usage exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit2(EXIT_USAGE, f"{self.prog}: error: {message}")


class SystemExit2(Exception):
    """Usage failure carrying an exit code and message."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="hyperec",
        description="Hypergraph ensemble recommender pipeline.")
    parser.add_argument("--dump-config", action="store_true",
                        help="print the default config JSON and exit")
    sub = parser.add_subparsers(dest="command")
    for name, doc in (("prepare", "load the dataset and persist the split"),
                      ("train", "train built-in models and write rankings"),
                      ("rank", "build hypergraph rankers and write rankings"),
                      ("evaluate", "score all rankings and write the report"),
                      ("run", "all stages end to end")):
        p = sub.add_parser(name, help=doc, description=doc)
        p.add_argument("--config", required=True, metavar="PATH",
                       help="run configuration JSON")
        p.add_argument("--seed", type=int, metavar="N",
                       help="override the config seed")
        p.add_argument("--threads", type=int, metavar="N",
                       help="solver thread count (1 = fully sequential)")
        p.add_argument("--k", type=int, metavar="N",
                       help="override the recommendation list length")
        p.add_argument("--output", metavar="DIR",
                       help="override the output directory")
        p.add_argument("--verbose", action="store_true",
                       help="log progress to stderr")
    return parser


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    if args.k is not None:
        cfg.k = args.k
    if args.output is not None:
        cfg.output_dir = args.output
    return cfg


def _dispatch(args: argparse.Namespace) -> int:
    if args.command is None:
        raise SystemExit2(EXIT_USAGE, "hyperec: error: a subcommand is required "
                                      "(prepare, train, rank, evaluate, run)")
    _setup_logging(args)
    cfg = _apply_overrides(load_config(args.config), args)
    cfg.validate()
    if args.command == "prepare":
        stage_prepare(cfg)
        print(f"split written to {cfg.output_path('split.json')}")
    elif args.command == "train":
        rankings = stage_train(cfg)
        print(f"trained {len(cfg.models)} model(s); wrote "
              f"{len(rankings)} rankings file(s) to {cfg.output_dir}")
    elif args.command == "rank":
        produced = stage_rank(cfg)
        print(f"wrote hypergraph rankings ({', '.join(sorted(produced))}) "
              f"to {cfg.output_dir}")
    elif args.command == "evaluate":
        reports = stage_evaluate(cfg)
        print(format_report_table(reports), end="")
    elif args.command == "run":
        sd = stage_prepare(cfg)
        stage_train(cfg, sd)
        stage_rank(cfg, sd)
        reports = stage_evaluate(cfg, sd)
        print(format_report_table(reports), end="")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.dump_config:
            print(default_config_json(), end="")
            return EXIT_OK
        return _dispatch(args)
    except SystemExit2 as exc:
        print(exc, file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"hyperec: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"hyperec: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DataError as exc:
        print(f"hyperec: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except HyperecError as exc:  # pragma: no cover - defensive
        print(f"hyperec: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"hyperec: i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA


def _setup_logging(args: argparse.Namespace) -> None:
    if getattr(args, "verbose", False):
        logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
