from __future__ import annotations

import argparse
import logging
import logging.config
import sys
from pathlib import Path
from typing import Optional, Sequence

from config import settings
from shared.exceptions import McfkitError

from .services import explain, run

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcfkit",
        description="Morse, local Morse and Morse-Conley-Floer homology from scenario files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the tasks of a scenario file and write report.json")
    p_run.add_argument("scenario", type=Path, help="scenario file (TOML)")
    p_run.add_argument("--output", "-o", type=Path, default=None, help=f"output directory (default {settings.OUTPUT_DIR})")
    p_run.add_argument("--halt-on-fail", dest="halt_on_fail", action="store_true", default=None,
                       help="skip the remaining tasks after the first failure")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--threads", type=int, default=None, help="worker threads for orbit integration")
    p_run.add_argument("--dump-orbits", dest="dump_orbits", action="store_true", default=False,
                       help="write witness orbits as CSV under <output>/orbits")

    p_explain = sub.add_parser("explain", help="print a readable summary of a report")
    p_explain.add_argument("report", type=Path, help="report.json written by 'run'")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.config.dictConfig(settings.LOGGING)
    try:
        if args.command == "run":
            if args.seed is not None and args.seed < 0:
                raise McfkitError("--seed 는 0 이상", stage="scenarios.cli", seed=args.seed)
            result = run(
                args.scenario,
                output=args.output,
                halt_on_fail=args.halt_on_fail,
                seed=args.seed,
                threads=args.threads,
                dump_orbits=args.dump_orbits,
            )
            print(result.report_path)
            return result.exit_code
        print(explain(args.report))
        return 0
    except McfkitError as exc:
        logger.error(f"{exc.stage}: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
