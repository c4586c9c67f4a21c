"""Command-line entry point: ``ledgerdyn --scenario FILE [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .scenario import ParseError, parse_scenario, with_overrides
from .sim import run
from .trace import emit_trace

EXIT_OK, EXIT_CHECK_FAILED, EXIT_BAD_INPUT = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ledgerdyn", description="Run a ledger / consensus / value-function scenario.")
    p.add_argument("--scenario", required=True, help="scenario file (TOML)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", help="trace destination (default: scenario output.path, else stdout)")
    p.add_argument("--format", choices=("csv", "jsonl"), help="trace format")
    p.add_argument("--check", action="append", default=[], metavar="NAME", help="additional check (repeatable)")
    p.add_argument("--quiet", action="store_true", help="no summary on stderr")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        scenario = with_overrides(parse_scenario(args.scenario), seed=args.seed, extra_checks=args.check,
                                  out=args.out, fmt=args.format)
    except (ParseError, OSError) as exc:
        print(f"ledgerdyn: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT

    result = run(scenario)

    out = scenario.output
    if out.path:
        with open(out.path, "w", encoding="utf-8", newline="") as fh:
            emit_trace(result.records, out.format, fh, result.check_names)
    else:
        emit_trace(result.records, out.format, sys.stdout, result.check_names)

    report = json.dumps(result.report_dict(), indent=2, sort_keys=True)
    if out.report:
        Path(out.report).write_text(report + "\n", encoding="utf-8")
    elif result.exit_status != EXIT_OK:
        print(report, file=sys.stderr)
    if not args.quiet:
        status = "ok" if result.exit_status == EXIT_OK else "FAILED"
        print(f"ledgerdyn: {len(result.records)} steps, {len(result.reports)} checks, {status}", file=sys.stderr)
    return EXIT_CHECK_FAILED if result.exit_status else EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
