"""Command line front end: run one experiment from a config file."""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from .errors import Cat0otError, ConfigInvalid
from .harness import EXPERIMENTS, emit_report, run_scenario, scenario_from_config


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cat0ot",
        description="Run a transport or geometry experiment and report its metrics.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS, help="experiment to run")
    parser.add_argument("--config", required=True, help="path to a JSON scenario config")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="write the report here instead of stdout")
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    return parser


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigInvalid(path, f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(path, f"config is not valid JSON: {exc}") from exc


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        doc = _load_config(args.config)
        scenario = scenario_from_config(doc, experiment=args.experiment, seed=args.seed)
        report = run_scenario(scenario)
        text = emit_report(report, out=args.out, fmt=args.format)
    except Cat0otError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.out is None:
        sys.stdout.write(text)
    return 0 if report.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
