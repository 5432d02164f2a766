"""
Command line entry point: ``python cli.py run|verify|report``.

Exit codes: 0 on success (workloads that ran out of space included), 1 for
usage or configuration errors, 2 for invariant violations and failed
verification.
"""

import argparse
import json
import logging
import os
import sys
from typing import Optional, Sequence

from dotenv import load_dotenv

from api.common.errors import SimulationError
from api.experiments.recipes import RECIPES
from api.experiments.services import cmd_report, cmd_run, cmd_verify
from api.experiments.verification import SCOPES

logger = logging.getLogger("zns_sim")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma separated integers, got '{text}'")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="zns-sim", description="Zoned SSD zone allocation simulator")
    parser.add_argument("--log-level", default=os.environ.get("ZNS_SIM_LOG_LEVEL", "INFO"),
                        help="Logging level (default: ZNS_SIM_LOG_LEVEL or INFO)")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run a recipe or the configured experiment")
    run.add_argument("--config", help="TOML configuration file")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                     help="Override a configuration key (repeatable)")
    run.add_argument("--recipe", choices=sorted(RECIPES), help="Canned experiment plan")
    run.add_argument("--out", help="Output directory (default: ZNS_SIM_OUT_DIR or results)")
    run.add_argument("--seeds", type=_seed_list, help="Comma separated seeds replacing those of every run")
    run.add_argument("--jobs", type=_positive_int, default=1, help="Independent worker processes")

    verify = commands.add_parser("verify", help="Run the self-check suites")
    verify.add_argument("--scope", choices=SCOPES, default="all")
    verify.add_argument("--instances", type=int, default=1000, help="Random allocator instances")
    verify.add_argument("--commands", type=int, default=100_000, help="Zone commands for the invariant sweep")
    verify.add_argument("--seed", type=int, default=0)

    report = commands.add_parser("report", help="Write report tables for a run directory")
    report.add_argument("run_dir", nargs="?", help="Run output directory (default: ZNS_SIM_OUT_DIR or results)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            summary = cmd_run(args.config, args.overrides, args.recipe, args.out, args.seeds, args.jobs)
            print(summary.model_dump_json(indent=2))
            return EXIT_OK
        if args.command == "verify":
            report = cmd_verify(args.scope, args.instances, args.commands, args.seed)
            print(json.dumps(report.model_dump(), indent=2, default=str))
            return EXIT_OK if report.passed else EXIT_FAILURE
        tables = cmd_report(args.run_dir)
        print(tables.model_dump_json(indent=2))
        return EXIT_OK
    except SimulationError as e:
        logger.error("%s: %s", type(e).__name__, e.detail)
        logger.debug("Error context: %s", json.dumps(e.to_dict(), default=str))
        for note in getattr(e, "__notes__", ()):
            logger.error(note)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
