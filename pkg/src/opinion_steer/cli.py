"""Command-line entry point.

Runs every requested (policy, seed) combination of a scenario, writes one
trajectory CSV and one summary JSON per run, and prints a one-line metric
summary each. All validation happens before the first run starts, so a bad
flag never leaves partial output behind. Exit codes: 0 on success, 2 for
usage errors, 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .experiments import Scenario, build_scenario, compute_metrics, write_outputs
from .mpc import run_experiment
from .policies import PolicyKind

_POLICY_CHOICES = tuple(kind.value for kind in PolicyKind)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opinion-steer",
        description="Steer a bounded-confidence opinion population by sampling-based MPC.",
    )
    parser.add_argument(
        "--scenario", required=True,
        help="scenario name (steering, polarized) or path to a JSON scenario file",
    )
    parser.add_argument(
        "--policy", required=True, nargs="+", choices=_POLICY_CHOICES,
        help="one or more policy kinds to run",
    )
    parser.add_argument(
        "--seeds", required=True, nargs="+", type=int,
        help="one or more non-negative experiment seeds",
    )
    parser.add_argument(
        "--out", default=None,
        help="output directory (default: $OPINION_STEER_OUT, else ./runs)",
    )
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override a scenario field by dotted path, e.g. model.alpha=0.5; repeatable",
    )
    parser.add_argument(
        "--jobs", type=int, default=1,
        help="run this many (policy, seed) combinations in parallel (default 1)",
    )
    return parser


def _run_one(scenario: Scenario, policy: str, seed: int, out_dir: str) -> str:
    record = run_experiment(scenario, policy, seed)
    metrics = compute_metrics(record)
    traj_path, _ = write_outputs(record, metrics, out_dir)
    t_mean = metrics.time_to_threshold
    t_mode = metrics.time_to_mode_threshold
    return (
        f"{record.scenario_name} {policy} seed={seed}: "
        f"terminal_gap={metrics.terminal_gap:.4f} "
        f"time_to_threshold={'-' if t_mean is None else t_mean} "
        f"mode_time={'-' if t_mode is None else t_mode} "
        f"effort={metrics.control_effort:.1f} -> {traj_path}"
    )


def parse_and_run(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the diagnostic
        return int(exc.code or 0)

    # validate everything up front; nothing is written past this block
    try:
        overrides: dict[str, str] = {}
        for item in args.overrides:
            key, sep, value = item.partition("=")
            if not sep or not key:
                raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
            overrides[key] = value
        scenario = build_scenario(args.scenario, overrides)
        if any(seed < 0 for seed in args.seeds):
            raise ValueError("seeds must be non-negative")
        if args.jobs < 1:
            raise ValueError("--jobs must be at least 1")
    except ValueError as exc:
        print(f"opinion-steer: error: {exc}", file=sys.stderr)
        return 2

    out_dir = args.out or os.environ.get("OPINION_STEER_OUT") or "runs"
    runs = [(policy, seed) for policy in args.policy for seed in args.seeds]
    try:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        if args.jobs == 1 or len(runs) == 1:
            for policy, seed in runs:
                print(_run_one(scenario, policy, seed, out_dir), flush=True)
        else:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                futures = [
                    pool.submit(_run_one, scenario, policy, seed, out_dir)
                    for policy, seed in runs
                ]
                for future in futures:
                    print(future.result(), flush=True)
    except Exception:
        traceback.print_exc()
        return 1
    return 0


def main() -> None:
    sys.exit(parse_and_run(sys.argv[1:]))
