"""
Command-line entry point: ``python -m filterlab.main <subcommand> ...``.
"""
import argparse
import logging
import sys
from typing import List, Optional

from filterlab.cli.commands import cmd_compare, cmd_run, cmd_simulate, cmd_validate
from filterlab.models.schemas import FILTER_KINDS
from filterlab.tools.validation_tool import SUITE_NAMES

__version__ = "1.0.0"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="filterlab",
        description="Kalman filter family simulator with oracle validation suites",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--quiet", action="store_true", help="Only log warnings; no stdout summaries")
    subparsers = parser.add_subparsers(dest="command", required=True)

    simulate = subparsers.add_parser("simulate", help="Write a ground-truth trajectory CSV")
    run = subparsers.add_parser("run", help="Run one filter and write per-step reports")
    compare = subparsers.add_parser("compare", help="Run several filters on one trajectory")
    for sub in (simulate, run, compare):
        sub.add_argument("--config", required=True, help="Scenario document (JSON)")
        sub.add_argument("--out", required=True, help="Output CSV path")
        sub.add_argument("--seed", type=int, default=None, help="Override the scenario seed")
    run.add_argument("--filter", dest="kind", default=None, help=f"One of: {', '.join(FILTER_KINDS)}")
    compare.add_argument(
        "--filter",
        dest="kinds",
        action="append",
        default=None,
        help="Filter kind to include (repeatable); defaults to the document's compare list",
    )

    validate = subparsers.add_parser("validate", help="Run an oracle validation suite")
    validate.add_argument("--suite", required=True, help=f"One of: {', '.join(SUITE_NAMES)}")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    if args.command == "simulate":
        return cmd_simulate(args.config, args.out, seed=args.seed, quiet=args.quiet)
    if args.command == "run":
        return cmd_run(args.config, args.out, seed=args.seed, kind=args.kind, quiet=args.quiet)
    if args.command == "compare":
        return cmd_compare(args.config, args.out, seed=args.seed, kinds=args.kinds, quiet=args.quiet)
    return cmd_validate(args.suite, quiet=args.quiet)


if __name__ == "__main__":
    sys.exit(main())
