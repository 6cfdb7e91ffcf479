"""Command-line entry point.

Exit codes: 0 when every proved bound held, 2 when a proved bound failed
(an implementation bug), 3 when only premises failed, 1 for usage or I/O
errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext

from .config import EXAMPLES, SCENARIOS, ConfigError, from_dict, load_config
from .emit import EmitError, emit_reports
from .runner import run_scenario

THREADS_ENV = "THERMOLATTICE_THREADS"


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which is reserved for failed bounds
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _sizes(text: str) -> list[int]:
    try:
        sizes = [int(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of integers: {text!r}") from None
    if not sizes or min(sizes) < 2:
        raise argparse.ArgumentTypeError("sizes must be integers >= 2")
    return sizes


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="thermolattice", description="Equilibration and thermalization checks on small spin lattices.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="scenario", required=True, parser_class=_Parser)
    for name in SCENARIOS:
        sp = sub.add_parser(name, help=f"run the {name} scenario")
        sp.add_argument("--config", help="JSON configuration (default: built-in example)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="override analysis.seed")
        sp.add_argument("--sizes", type=_sizes, help="override the size sweep, e.g. 6,8,10")
    return p


def _thread_limit():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(value))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else from_dict(EXAMPLES[args.scenario])
        if cfg.scenario != args.scenario:
            raise ConfigError(f"config describes scenario {cfg.scenario!r}, not {args.scenario!r}")
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.sizes is not None:
            overrides["size_sweep"] = args.sizes
        if overrides:
            cfg = cfg.replace(**overrides)
        with _thread_limit():
            record = run_scenario(cfg)
        paths = emit_reports(record, args.out)
    except (ConfigError, EmitError) as exc:
        print(f"thermolattice: {exc}", file=sys.stderr)
        return 1
    status = record.status()
    summary = {"status": status, "files": [str(p) for p in paths], "wall_time_s": round(record.wall_time, 3)}
    print(json.dumps(summary, indent=2))
    return status


if __name__ == "__main__":
    sys.exit(main())
