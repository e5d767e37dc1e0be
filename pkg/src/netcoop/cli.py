"""Command-line entry point.

    netcoop run configs/corridor.yaml --out runs/demo --strategy ds
    netcoop compare configs/table2.yaml --out results/table2

``run`` executes one scenario and exits 0 iff the safety audit is clean.
``compare`` sweeps a plan over (value, seed, strategy), writes one summary
per run and a delimited table of mean and standard deviation per row.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import yaml

from .coordinator import STRATEGIES
from .sim import run_scenario, scenario_from_dict, write_summary, write_traces

SWEEPABLE = ("rate", "l_r", "delta_T")


def load_document(path) -> dict:
    """YAML or JSON file to a dict (JSON is valid YAML)."""
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: expected a mapping at the top level")
    return doc


# -- experiment plans -------------------------------------------------------

PLAN_SCHEMA = {
    "type": "object",
    "required": ["scenario", "sweep", "strategies", "seeds"],
    "properties": {
        "name": {"type": "string"},
        "scenario": {"type": ["object", "string"]},
        "sweep": {"type": "object", "required": ["param", "values"],
                  "properties": {"param": {"enum": list(SWEEPABLE)},
                                 "values": {"type": "array", "items": {"type": "number"}}}},
        "strategies": {"type": "array", "items": {"enum": list(STRATEGIES)}},
        "seeds": {"oneOf": [{"type": "integer", "minimum": 1},
                            {"type": "array", "items": {"type": "integer"}}]},
        "output": {"type": "string"},
        "eta_at": {"type": "integer"},
    },
    "additionalProperties": False,
}


@dataclass
class ExperimentPlan:
    scenario: dict
    param: str
    values: list
    strategies: list
    seeds: list
    output: str = "results"
    name: str = "plan"
    eta_at: int = 1

    def __post_init__(self):
        if self.param not in SWEEPABLE:
            raise ValueError(f"cannot sweep {self.param!r}; choose from {SWEEPABLE}")
        if not self.values:
            raise ValueError("the sweep needs at least one value")
        if not self.strategies:
            raise ValueError("the plan needs at least one strategy")
        if not self.seeds:
            raise ValueError("the plan needs at least one seed")
        for name, items in (("values", self.values), ("strategies", self.strategies), ("seeds", self.seeds)):
            if len(set(items)) != len(items):
                raise ValueError(f"duplicate entries in {name}")

    @classmethod
    def from_dict(cls, doc: dict, base: Path | None = None) -> "ExperimentPlan":
        jsonschema.validate(doc, PLAN_SCHEMA)
        scen = doc["scenario"]
        if isinstance(scen, str):
            scen = load_document((base or Path(".")) / scen)
        seeds = doc["seeds"]
        seeds = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
        return cls(scenario=scen, param=doc["sweep"]["param"], values=list(doc["sweep"]["values"]),
                   strategies=list(doc["strategies"]), seeds=seeds,
                   output=doc.get("output", "results"), name=doc.get("name", "plan"),
                   eta_at=doc.get("eta_at", 1))

    def jobs(self) -> list[tuple]:
        """Every (value, seed, strategy) combination exactly once, in a fixed order."""
        return [(v, s, st) for v in self.values for st in self.strategies for s in self.seeds]

    def scenario_doc(self, value, seed: int, strategy: str) -> dict:
        doc = copy.deepcopy(self.scenario)
        doc["seed"] = seed
        doc.setdefault("rolling", {})["strategy"] = strategy
        if self.param == "rate":
            doc["rate"] = value
        elif self.param == "l_r":
            doc.setdefault("division", {})["l_r"] = value
        else:
            doc["rolling"]["delta_T"] = value
        return doc


def run_name(param: str, value, seed: int, strategy: str) -> str:
    return f"{param}={value:g}_{strategy}_seed{seed}"


def _run_job(args):
    doc, path = args
    res = run_scenario(scenario_from_dict(doc))
    write_summary(res, path)
    return path, len(res.violations)


def execute_plan(plan: ExperimentPlan, out: Path | None = None, workers: int = 1) -> dict:
    """Run (or reuse) every job of a plan; returns {(value, seed, strategy): summary document}.

    Each summary is written as soon as its run ends, so an aborted sweep keeps
    its finished runs.  Existing summaries with a matching config are reused.
    """
    out = Path(out or plan.output)
    runs = out / "runs"
    runs.mkdir(parents=True, exist_ok=True)
    todo, paths = [], {}
    for value, seed, strategy in plan.jobs():
        doc = plan.scenario_doc(value, seed, strategy)
        path = runs / (run_name(plan.param, value, seed, strategy) + ".json")
        paths[(value, seed, strategy)] = path
        if path.exists() and _same_config(path, doc):
            continue
        todo.append((doc, str(path)))
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(workers) as pool:
            list(pool.map(_run_job, todo))
    else:
        for job in todo:
            _run_job(job)
    return {key: json.loads(p.read_text()) for key, p in paths.items()}


def _same_config(path: Path, doc: dict) -> bool:
    try:
        old = json.loads(path.read_text())
    except (OSError, ValueError):
        return False
    return old.get("config") == scenario_from_dict(doc).to_dict()


# -- aggregation ------------------------------------------------------------

TABLE_COLUMNS = ["param", "value", "strategy", "n", "total_delay_mean", "total_delay_std",
                 "average_speed_mean", "average_speed_std", "violations", "per_intersection_mean",
                 "per_intersection_std", "eta_mean", "eta_std"]


def _mean_std(xs):
    xs = list(xs)
    if not xs:
        return None, None
    return statistics.fmean(xs), (statistics.stdev(xs) if len(xs) > 1 else 0.0)


def aggregate(plan: ExperimentPlan, summaries: dict) -> list[dict]:
    """One row per (value, strategy); eta rows compare ds against pds seed by seed.

    ``eta_mean`` is computed from the seed-averaged delays at ``plan.eta_at``
    and ``eta_std`` from the per-seed reductions.
    """
    rows = []
    for value in plan.values:
        for strategy in plan.strategies:
            docs = [summaries[(value, s, strategy)] for s in plan.seeds]
            m = [d["metrics"] for d in docs]
            tot = _mean_std(x["total_delay"] for x in m)
            spd = _mean_std(x["average_speed"] for x in m)
            keys = sorted({k for x in m for k in x["per_intersection"]}, key=int)
            per_mean, per_std = {}, {}
            for k in keys:
                per_mean[k], per_std[k] = _mean_std(x["per_intersection"][k] for x in m
                                                    if k in x["per_intersection"])
            row = {"param": plan.param, "value": value, "strategy": strategy, "n": len(docs),
                   "total_delay_mean": tot[0], "total_delay_std": tot[1],
                   "average_speed_mean": spd[0], "average_speed_std": spd[1],
                   "violations": sum(d["violations"] for d in docs),
                   "per_intersection_mean": per_mean, "per_intersection_std": per_std,
                   "eta_mean": None, "eta_std": None}
            if strategy == "ds" and "pds" in plan.strategies:
                k = str(plan.eta_at)
                base = [summaries[(value, s, "pds")]["metrics"]["per_intersection"].get(k, 0.0)
                        for s in plan.seeds]
                new = [x["per_intersection"].get(k, 0.0) for x in m]
                if statistics.fmean(base) > 0:
                    row["eta_mean"] = (statistics.fmean(base) - statistics.fmean(new)) / statistics.fmean(base) * 100
                    row["eta_std"] = _mean_std((b - n) / b * 100 for b, n in zip(base, new) if b > 0)[1]
            rows.append(row)
    return rows


def write_table(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_COLUMNS)
        for r in rows:
            w.writerow([_cell(r[c]) for c in TABLE_COLUMNS])


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    if isinstance(x, dict):
        return json.dumps({k: round(v, 6) for k, v in x.items()}, sort_keys=True)
    return str(x)


def format_table(rows: list[dict]) -> str:
    lines = [f"{'value':>8} {'strategy':>8} {'delay':>18} {'speed':>16} {'eta %':>14}"]
    for r in rows:
        eta = "" if r["eta_mean"] is None else f"{r['eta_mean']:6.2f} ± {r['eta_std']:.2f}"
        lines.append(f"{r['value']:>8g} {r['strategy']:>8} "
                     f"{r['total_delay_mean']:9.4f} ± {r['total_delay_std']:6.4f} "
                     f"{r['average_speed_mean']:7.3f} ± {r['average_speed_std']:5.3f} {eta:>14}")
    return "\n".join(lines)


# -- commands ---------------------------------------------------------------

def cmd_run(args) -> int:
    doc = load_document(args.scenario)
    cfg = scenario_from_dict(doc, seed=args.seed, strategy=args.strategy, iterations=args.iterations)
    res = run_scenario(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_traces(res.traces, out / "trace.csv")
    write_summary(res, out / "summary.json")
    res.plan_log.write(out / "planning.jsonl")
    s = res.summary
    print(f"strategy={cfg.rolling.strategy} seed={cfg.seed} vehicles={s.N} "
          f"delay={s.total_delay:.4f}s speed={s.average_speed:.3f}m/s violations={len(res.violations)}")
    return 0 if not res.violations else 1


def cmd_compare(args) -> int:
    path = Path(args.plan)
    doc = load_document(path)
    if args.strategy:
        doc["strategies"] = [args.strategy]
    plan = ExperimentPlan.from_dict(doc, base=path.parent)
    if args.seed is not None:
        plan.seeds = [args.seed]
    if args.iterations is not None:
        plan.scenario.setdefault("rolling", {})["iterations"] = args.iterations
    out = Path(args.out or plan.output)
    summaries = execute_plan(plan, out, workers=args.workers)
    rows = aggregate(plan, summaries)
    write_table(rows, out / "table.csv")
    print(format_table(rows))
    bad = sum(r["violations"] for r in rows)
    return 0 if bad == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netcoop", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="simulate one scenario")
    r.add_argument("scenario", help="scenario file (YAML or JSON)")
    r.add_argument("--out", default="run_output", help="output directory")
    c = sub.add_parser("compare", help="sweep an experiment plan")
    c.add_argument("plan", help="plan file (YAML or JSON)")
    c.add_argument("--out", default=None, help="output directory (defaults to the plan's)")
    c.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    for q in (r, c):
        q.add_argument("--seed", type=int, default=None, help="override the master seed")
        q.add_argument("--strategy", choices=STRATEGIES, default=None, help="override the strategy")
        q.add_argument("--iterations", type=int, default=None, help="MCTS iterations per sub-problem")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return cmd_run(args) if args.command == "run" else cmd_compare(args)
    except (ValueError, jsonschema.ValidationError, OSError, yaml.YAMLError) as exc:
        msg = exc.message if isinstance(exc, jsonschema.ValidationError) else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
