#!/usr/bin/env python3
import argparse
import json
import sys

from src.experiment.handler import handler

EXIT_CODES = {200: 0, 400: 2, 500: 1}


def _sizes(value: str):
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"--m expects comma-separated integers, got '{value}'") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snoutbench", description="Attribute-inference attacks on query-based systems")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run an attack experiment")
    run.add_argument("--config", required=True, help="Experiment config JSON")
    run.add_argument("--preset", choices=["desk", "full", "smoke"], help="Scale preset applied over the config")
    run.add_argument("--workers", type=int, help="Worker processes (default: logical CPUs)")
    run.add_argument("--out", default="runs/latest", help="Output directory")
    run.add_argument("--m", type=_sizes, help="Comma-separated solution sizes to sweep, e.g. 10,50,100")

    analyze = commands.add_parser("analyze", help="Difference-query analysis of a finished run")
    analyze.add_argument("--run", required=True, help="Run output directory")

    stats = commands.add_parser("qbs-stats", help="Noise-distribution diagnostics")
    stats.add_argument("--config", required=True, help="Experiment config JSON")
    stats.add_argument("--preset", choices=["desk", "full", "smoke"])
    stats.add_argument("--trials", type=int, default=2000)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    response = handler(vars(args))
    print(json.dumps(json.loads(response["body"]), indent=2))
    return EXIT_CODES.get(response["statusCode"], 1)


if __name__ == "__main__":
    sys.exit(main())
