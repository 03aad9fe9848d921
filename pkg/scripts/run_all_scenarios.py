#!/usr/bin/env python3
"""Run the six standard scenarios and write their JSON reports.

Usage: python3 scripts/run_all_scenarios.py [out_dir] [--grid N] [--seed S]
"""

import argparse
import dataclasses
import sys

from laplab.errors import LapLabError
from laplab.verify import SCENARIO_IDS, ScenarioConfig, run_scenario


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir", nargs="?", default="reports")
    ap.add_argument("--grid", type=int, default=32)
    ap.add_argument("--bandwidth", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=1234)
    args = ap.parse_args()

    base = ScenarioConfig(
        scenario="S1",
        grid=args.grid,
        bandwidth=args.bandwidth,
        seed=args.seed,
        out_dir=args.out_dir,
    )
    failures = 0
    for sid in SCENARIO_IDS:
        try:
            result = run_scenario(dataclasses.replace(base, scenario=sid))
        except LapLabError as exc:
            print(f"{sid}: ERROR  {exc}")
            failures += 1
            continue
        status = "pass" if result.passed else "FAIL"
        worst = ", ".join(
            f"{name}={value:.3e}" for name, value in sorted(result.discrepancies.items())
        )
        print(f"{sid}: {status}  {worst}")
        failures += not result.passed
    print(f"reports in {args.out_dir}/")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
