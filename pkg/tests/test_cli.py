import csv
import json
from pathlib import Path

import jsonschema
import pytest
import yaml

from netcoop.cli import ExperimentPlan, aggregate, execute_plan, load_document, main
from netcoop.coordinator import PlanningLog
from netcoop.sim import TRACE_COLUMNS, read_traces

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SCENARIO = {"network": {"type": "corridor"}, "rate": 1200, "duration": 120, "seed": 0,
            "division": {"l_c": 200, "l_r": 100}, "rolling": {"strategy": "fifo"}}


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(doc))
    return p


def test_run_smoke(tmp_path, capsys):
    scen = write(tmp_path, "s.yaml", SCENARIO)
    assert main(["run", str(scen), "--out", str(tmp_path / "a")]) == 0
    out = tmp_path / "a"
    doc = json.loads((out / "summary.json").read_text())
    assert set(doc) == {"schema", "seed", "strategy", "config", "metrics", "counts", "violations"}
    assert set(doc["metrics"]) == {"N", "total_delay", "per_intersection", "average_speed", "eta", "counts"}
    assert doc["metrics"]["N"] > 0 and doc["metrics"]["average_speed"] > 0
    assert doc["violations"] == 0 and doc["strategy"] == "fifo"
    with open(out / "trace.csv") as fh:
        assert fh.readline().startswith("# trace schema")
        assert next(csv.reader(fh)) == TRACE_COLUMNS
    assert len(read_traces(out / "trace.csv")) == doc["counts"]["spawned"]
    log = PlanningLog.read(out / "planning.jsonl")
    assert log and {"t", "k", "Q1", "Q2", "solve_time"} <= set(log[0])
    assert "vehicles=" in capsys.readouterr().out


def test_run_twice_identical(tmp_path):
    scen = write(tmp_path, "s.yaml", SCENARIO)
    for d in ("a", "b"):
        assert main(["run", str(scen), "--out", str(tmp_path / d), "--strategy", "ds"]) == 0
    assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()


def test_run_rejects_short_segment(tmp_path, capsys):
    bad = dict(SCENARIO, division={"l_c": 200, "l_r": 10})
    assert main(["run", str(write(tmp_path, "s.yaml", bad)), "--out", str(tmp_path / "o")]) == 2
    assert "l_r >= v_c*delta_T" in capsys.readouterr().err


def test_run_rejects_unknown_keys(tmp_path):
    bad = dict(SCENARIO, speed=3)
    assert main(["run", str(write(tmp_path, "s.yaml", bad))]) == 2


def test_missing_file():
    assert main(["run", "/nonexistent/scenario.yaml"]) == 2


class TestPlans:
    def test_empty_strategies_rejected(self):
        with pytest.raises(ValueError):
            ExperimentPlan(SCENARIO, "rate", [1200], [], [0])
        with pytest.raises(jsonschema.ValidationError):
            ExperimentPlan.from_dict({"scenario": SCENARIO, "sweep": {"param": "rate", "values": [1]},
                                      "strategies": ["greedy"], "seeds": 1})

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            ExperimentPlan(SCENARIO, "rate", [1200, 1200], ["ds"], [0])

    def test_jobs_cover_grid_once(self):
        plan = ExperimentPlan(SCENARIO, "l_r", [50, 100], ["pds", "ds"], [0, 1, 2])
        jobs = plan.jobs()
        assert len(jobs) == len(set(jobs)) == 12
        doc = plan.scenario_doc(50, 2, "pds")
        assert doc["division"]["l_r"] == 50 and doc["seed"] == 2 and doc["rolling"]["strategy"] == "pds"
        assert SCENARIO["division"]["l_r"] == 100  # the base document is untouched

    def test_shipped_configs_load(self):
        for p in CONFIGS.glob("*.yaml"):
            doc = load_document(p)
            if "sweep" in doc:
                plan = ExperimentPlan.from_dict(doc, base=CONFIGS)
                assert plan.jobs()


def test_compare_and_aggregate(tmp_path, capsys):
    scen = dict(SCENARIO, duration=60, network={"type": "single"})
    plan_doc = {"name": "t", "scenario": scen, "sweep": {"param": "rate", "values": [600, 1200]},
                "strategies": ["pds", "ds"], "seeds": 2, "output": str(tmp_path / "res")}
    plan_file = write(tmp_path, "plan.yaml", plan_doc)
    assert main(["compare", str(plan_file)]) == 0
    out = tmp_path / "res"
    with open(out / "table.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert {r["strategy"] for r in rows} == {"pds", "ds"}
    assert all(r["eta_mean"] == "" for r in rows if r["strategy"] == "pds")
    # recompute a row from the per-run files
    runs = [json.loads((out / "runs" / f"rate=600_ds_seed{s}.json").read_text()) for s in (0, 1)]
    mean = sum(r["metrics"]["total_delay"] for r in runs) / 2
    row = next(r for r in rows if r["strategy"] == "ds" and float(r["value"]) == 600)
    assert float(row["total_delay_mean"]) == pytest.approx(mean, abs=1e-6)
    # a second call reuses the finished runs and gives the same table
    plan = ExperimentPlan.from_dict(plan_doc)
    again = aggregate(plan, execute_plan(plan, out))
    assert again[0]["total_delay_mean"] == pytest.approx(float(rows[0]["total_delay_mean"]), abs=1e-6)
