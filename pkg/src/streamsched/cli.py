"""Command-line experiment runner.

Exit codes: 0 success, 1 config error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import sys

from . import harness
from .scenario import Scenario, ScenarioError, load_scenario, with_config


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="scenario config file (JSON)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--scheduler", choices=["cameo", "fifo", "local-first"])
    parser.add_argument("--policy", choices=["llf", "edf", "sjf", "token"])
    parser.add_argument("--quantum-ms", type=float, dest="quantum_ms")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--aging-ms", type=float, dest="aging_ms")
    parser.add_argument(
        "--semantic-awareness",
        choices=["on", "off"],
        help="toggle frontier-based deadline extension for windowed operators",
    )
    parser.add_argument("--trace", action="store_true", help="write trace.csv")
    parser.add_argument("--mode", choices=["virtual", "wall"])


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamsched",
        description="Deadline-driven stream scheduling simulator and experiment harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one scenario and write reports")
    _add_common(run_p)

    sweep_p = sub.add_parser("sweep", help="run a scenario across one parameter axis")
    _add_common(sweep_p)
    sweep_p.add_argument("--axis", required=True, choices=list(harness.SWEEP_AXES))
    sweep_p.add_argument(
        "--values", required=True, help="comma-separated axis values, e.g. 1,10,100"
    )
    return parser


def _apply_cli_overrides(scenario: Scenario, args: argparse.Namespace) -> Scenario:
    overrides = {}
    for name in ("scheduler", "policy", "quantum_ms", "workers", "aging_ms"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if args.semantic_awareness is not None:
        overrides["semantic_awareness"] = args.semantic_awareness == "on"
    if overrides:
        scenario = with_config(scenario, **overrides)
    if args.trace:
        scenario.trace = True
    if args.mode is not None:
        scenario.mode = args.mode
    return scenario


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.config)
        scenario = _apply_cli_overrides(scenario, args)
    except (ScenarioError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "run":
            _, summary = harness.run(scenario, seed=args.seed, out_dir=args.out)
            totals = summary["totals"]
            print(
                f"wrote {args.out}: {totals['outputs']} outputs, "
                f"{totals['executed_messages']} messages executed"
            )
        else:
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            if not values:
                print("config error: --values is empty", file=sys.stderr)
                return 1
            harness.sweep(scenario, args.axis, values, seed=args.seed, out_dir=args.out)
            print(f"wrote {args.out}/sweep.csv ({len(values)} runs over {args.axis})")
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
