"""Command-line driver.

Exit codes: 0 ran without errors, 1 ran and found errors (or the replayed
case faults), 2 usage error, 3 replay diverged from or disagreed with the
recorded case.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config import CONFIGS, STRATEGIES, RunConfig
from .explore.context import ReplayDivergence
from .explore.demo import path_constraints, demo_report
from .explore.records import Status, TestCase
from .explore.runner import replay, run
from .netmodel import UsageError
from .report import render_report, write_outputs
from .toyquic import IMPLS, SCENARIOS

EXIT_OK, EXIT_ERRORS, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3


def _drops(text: str) -> Optional[int]:
    if text.lower() in ("inf", "none", "unbounded"):
        return None
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a drop count: {text!r}") from None
    if n < 0:
        raise argparse.ArgumentTypeError("max drops must be non-negative")
    return n


def _defects(text: str) -> frozenset:
    return frozenset(d.strip().upper() for d in text.split(",") if d.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quicinterop",
                                description="Symbolic interoperability testing of two toy QUIC stacks.")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--config", choices=CONFIGS, help="symbolic-input preset to explore")
    mode.add_argument("--replay", metavar="FILE", help="replay a saved test case")
    mode.add_argument("--demo-fig1", action="store_true", help="explore the built-in two-branch demo")
    p.add_argument("--defects", type=_defects, default=frozenset(), help="comma list, e.g. D1,D2")
    p.add_argument("--client-impl", choices=sorted(IMPLS), default="pico")
    p.add_argument("--server-impl", choices=sorted(IMPLS), default="quant")
    p.add_argument("--scenario", choices=SCENARIOS, help="override the preset's scenario")
    p.add_argument("--strategy", choices=STRATEGIES, default="dfs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-paths", type=int, default=100_000)
    p.add_argument("--max-steps", type=int, default=100_000)
    p.add_argument("--max-drops", type=_drops, default=3, help="integer or 'inf'")
    p.add_argument("--time-limit", type=float, default=None, metavar="SECONDS")
    p.add_argument("--out", default="out", metavar="DIR")
    p.add_argument("--emit-all", action="store_true", help="also write every test case to cases/")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _run_demo(args) -> int:
    report = demo_report(args.strategy)
    for i, tc in enumerate(report.all_test_cases, 1):
        cons = ", ".join(path_constraints(tc))
        print(f"path {i}: {{{cons}}}  witness x={tc.witnesses[0]}")
    if args.emit_all:
        write_outputs(args.out, "demo-fig1", report, emit_all=True)
    return EXIT_OK


def _run_replay(path: str) -> int:
    try:
        tc = TestCase.loads(Path(path).read_text())
    except (OSError, ValueError, KeyError) as e:
        print(f"error: cannot load test case {path}: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        outcome = replay(tc)
    except ReplayDivergence as e:
        print(f"replay diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    print(f"outcome: {outcome.status.value}")
    for sig in outcome.faults:
        print(f"fault: {sig}")
    if outcome != tc.outcome:
        print(f"recorded outcome was {tc.outcome.status.value} "
              f"{[str(f) for f in tc.outcome.faults]}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK if outcome.status is Status.FINISHED_OK else EXIT_ERRORS


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.demo_fig1:
        return _run_demo(args)
    if args.replay:
        return _run_replay(args.replay)
    if not args.config:
        parser.print_usage(sys.stderr)
        print("error: one of --config, --replay or --demo-fig1 is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = RunConfig(args.config, args.defects, args.client_impl, args.server_impl, args.scenario,
                        args.strategy, args.seed, args.max_paths, args.max_steps, args.time_limit,
                        args.max_drops, args.out, args.emit_all)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    report = run(cfg)
    out = write_outputs(cfg.out_dir, cfg.config_name, report, cfg.emit_all)
    print(render_report(cfg.config_name, report), end="")
    print(f"results written to {out}")
    return EXIT_ERRORS if report.errors else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
