"""Command-line interface.

Subcommands map to pipeline stages; flags mirror the flat key=value
config file, with flags winning.  Exit codes: 0 success, 2 configuration
error, 3 input error, 4 pipeline error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .fixtures import generate_fixture
from .pipeline import (
    ConfigError,
    InputError,
    PipelineError,
    cmd_ingest,
    cmd_run,
    cmd_summarize,
    cmd_topics,
    config_from_mapping,
    parse_config_file,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_PIPELINE = 4

_CONFIG_FLAGS = (
    ("--dump", "path to the Posts dump XML"),
    ("--store", "path of the NDJSON post store"),
    ("--tag", "tag to keep (default android)"),
    ("--from", "window start, inclusive (RFC 3339 or YYYY-MM-DD)"),
    ("--to", "window end, exclusive"),
    ("--embedder", "builtin or http"),
    ("--endpoint", "embedding service base URL for --embedder http"),
    ("--dim", "builtin embedder dimension (default 256)"),
    ("--seed", "global random seed (default 42)"),
    ("--reduce-dim", "PCA target dimension (default 5)"),
    ("--cluster", "kmeans or dbscan"),
    ("--k", "cluster count for kmeans (default: sqrt(n/2) heuristic)"),
    ("--eps", "dbscan neighborhood radius"),
    ("--min-pts", "dbscan core point threshold"),
    ("--questions-per-topic", "Q/A pairs per topic (default 3)"),
    ("--pool-size", "questions pooled into each topic digest (default 50)"),
    ("--sentences-question", "sentences per problem summary (default 2)"),
    ("--sentences-answer", "sentences per solution summary (default 2)"),
    ("--sentences-digest", "sentences per topic digest (default 5)"),
    ("--score-min", "answer score threshold (default 2)"),
    ("--out", "output directory (default out)"),
    ("--format", "comma-separated outputs: md,csv,json"),
)


def _add_stage_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value configuration file")
    for flag, help_text in _CONFIG_FLAGS:
        parser.add_argument(flag, dest=flag[2:].replace("-", "_"), help=help_text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stackdigest",
        description="Mine a Stack Exchange dump for topics and problem/solution summaries.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, descr in (
        ("ingest", "parse and filter the dump into a post store"),
        ("topics", "embed, cluster, and weight topic terms"),
        ("summarize", "emit topic tables and Q/A summary reports"),
        ("run", "all stages end to end"),
    ):
        _add_stage_flags(sub.add_parser(name, help=descr))
    fixture = sub.add_parser("fixture", help="write a synthetic demo dump")
    fixture.add_argument("--out", default="fixture_posts.xml", help="output XML path")
    fixture.add_argument("--seed", type=int, default=42)
    fixture.add_argument("--questions", type=int, default=300)
    return parser


def _collect_config(args: argparse.Namespace):
    mapping: dict[str, str] = {}
    if args.config:
        mapping.update(parse_config_file(args.config))
    for flag, _ in _CONFIG_FLAGS:
        key = flag[2:].replace("-", "_")
        value = getattr(args, key, None)
        if value is not None:
            mapping[key] = value
    return config_from_mapping(mapping)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "fixture":
            generate_fixture(path=args.out, seed=args.seed, n_questions=args.questions)
            print(args.out)
            return EXIT_OK
        cfg = _collect_config(args)
        stage = {
            "ingest": cmd_ingest,
            "topics": cmd_topics,
            "summarize": cmd_summarize,
            "run": cmd_run,
        }[args.command]
        stage(cfg)
        return EXIT_OK
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PipelineError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
