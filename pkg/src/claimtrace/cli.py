"""Command-line entry point.

Two subcommands: ``run`` executes pipeline stages against a run directory,
``mock-serve`` starts the deterministic offline LLM server. Exit codes:
0 success, 1 stage failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

from .config import load_config
from .errors import ClaimtraceError, ConfigError
from .manifest import STAGES
from .mockserver import MockFixture, MockLLMServer
from .pipeline import run_all, run_stage

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="claimtrace",
        description="Claim-level factuality evaluation pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one pipeline stage (or 'all')")
    run.add_argument("stage", choices=STAGES + ("all",))
    run.add_argument("--config", default=None, help="YAML config file")
    run.add_argument("--run-id", default="default", help="run directory name")
    run.add_argument("--force", action="store_true",
                     help="re-run the stage even if the manifest marks it done")
    run.add_argument("--seed", type=int, default=None,
                     help="override the configured global seed")
    run.add_argument("--subsample-per-condition", type=int, default=None,
                     help="evaluate only N datapoints per condition")

    serve = sub.add_parser("mock-serve", help="serve canned LLM responses locally")
    serve.add_argument("--fixture", required=True, help="fixture JSON file")
    serve.add_argument("--port", type=int, default=8139)
    serve.add_argument("--host", default="127.0.0.1")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = dataclasses.replace(config, seed=args.seed)
        if args.subsample_per_condition is not None:
            config = dataclasses.replace(
                config, subsample_per_condition=args.subsample_per_condition
            )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.stage == "all":
            manifest = run_all(config, args.run_id, force=args.force)
        else:
            manifest = run_stage(config, args.run_id, args.stage, force=args.force)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ClaimtraceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    done = sum(manifest.is_done(stage) for stage in STAGES)
    print(f"run {args.run_id}: {done}/{len(STAGES)} stages done")
    return EXIT_OK


def _cmd_mock_serve(args: argparse.Namespace) -> int:
    fixture_path = Path(args.fixture)
    try:
        fixture = MockFixture.from_file(fixture_path)
    except ClaimtraceError as exc:
        print(f"fixture error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        server = MockLLMServer(fixture, host=args.host, port=args.port)
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    server.start()
    print(f"serving {fixture_path} at {server.base_url}")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "mock-serve":
        return _cmd_mock_serve(args)
    parser.error(f"unknown command {args.command!r}")  # pragma: no cover
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
