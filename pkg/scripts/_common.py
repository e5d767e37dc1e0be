"""Shared helper for the experiment scripts: run a plan file and print its table."""

import argparse
from pathlib import Path

from netcoop.cli import ExperimentPlan, aggregate, execute_plan, format_table, load_document, write_table

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main(plan_file: str, description: str):
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--seeds", type=int, default=None, help="number of seeds (default: the plan's)")
    ap.add_argument("--duration", type=float, default=None, help="simulated seconds per run")
    ap.add_argument("--out", default=None)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    path = CONFIGS / plan_file
    plan = ExperimentPlan.from_dict(load_document(path), base=path.parent)
    if args.seeds is not None:
        plan.seeds = list(range(args.seeds))
    if args.duration is not None:
        plan.scenario["duration"] = args.duration
    out = Path(args.out or plan.output)
    rows = aggregate(plan, execute_plan(plan, out, workers=args.workers))
    write_table(rows, out / "table.csv")
    print(format_table(rows))
    print(f"\nwritten to {out / 'table.csv'}")
    return rows
