import copy
import math

import pytest

from netcoop.coordinator import (
    AreaSnapshot, PlanningLog, RepairItem, RollingHorizonConfig, SnapVehicle, build_subproblem,
    handoff, plan_area, planning_tick, repair_schedule,
)
from netcoop.network import corridor, single
from netcoop.scheduling import AreaHistory, SafetyGaps
from netcoop.sim import World, scenario_from_dict

NODE = single().intersection(1)
GAPS = SafetyGaps()


def snap(area=(), segment=(), history=None):
    return AreaSnapshot(1, 0.0, tuple(area), tuple(segment), history or AreaHistory())


def sv(vid, mid, d, t_min, assigned=None, frozen=False):
    return SnapVehicle(vid, NODE.movement(mid).lane_key, mid, d, 10.0, t_min, assigned, frozen)


AREA3 = [sv(0, "S0-N", 50.0, 5.0), sv(1, "W0-E", 60.0, 6.0), sv(2, "S0-W", 120.0, 12.0)]
SEG2 = [sv(3, "E0-W", 250.0, 25.0), sv(4, "S0-N", 260.0, 26.0)]


class TestSubproblem:
    def test_counts_by_mode(self):
        ds = build_subproblem(snap(AREA3, SEG2), RollingHorizonConfig.for_strategy("ds"), NODE.conflicts)
        pds = build_subproblem(snap(AREA3, SEG2), RollingHorizonConfig.for_strategy("pds"), NODE.conflicts)
        assert (ds.Q1, ds.Q2) == (3, 2)
        assert (pds.Q1, pds.Q2) == (3, 0)

    def test_empty(self):
        inst = build_subproblem(snap(), RollingHorizonConfig(), NODE.conflicts)
        assert inst.vehicles == () and inst.scope == 1

    def test_lane_chain_by_distance(self):
        inst = build_subproblem(snap(AREA3, SEG2), RollingHorizonConfig(), NODE.conflicts)
        assert inst.lane_chains[(1, "S0")] == (0, 2, 4)

    def test_frozen_become_history(self):
        area = [sv(0, "S0-N", 20.0, 2.0, assigned=2.5, frozen=True), sv(1, "W0-E", 60.0, 6.0)]
        inst = build_subproblem(snap(area), RollingHorizonConfig(), NODE.conflicts)
        assert [v.vid for v in inst.vehicles] == [1]
        assert inst.history[1].lane_last == {"S0": 2.5}
        assert inst.history[1].mov_last == {"S0-N": 2.5}

    def test_single_vehicle_gets_t_min(self):
        p = plan_area(snap([sv(7, "S0-N", 100.0, 8.25)]), RollingHorizonConfig(), NODE.conflicts, GAPS, 0)
        assert p.times == {7: 8.25} and p.log["Q1"] == 1

    def test_ds_equals_pds_without_segment(self):
        ds = plan_area(snap(AREA3), RollingHorizonConfig.for_strategy("ds"), NODE.conflicts, GAPS, 3)
        pds = plan_area(snap(AREA3), RollingHorizonConfig.for_strategy("pds"), NODE.conflicts, GAPS, 3)
        assert ds.order == pds.order and ds.times == pds.times

    def test_segment_vehicles_get_reservations(self):
        p = plan_area(snap(AREA3, SEG2), RollingHorizonConfig.for_strategy("ds"), NODE.conflicts, GAPS, 0)
        assert {v for v, z in p.zones.items() if z == "segment"} == {3, 4}
        assert set(p.times) == {0, 1, 2, 3, 4}

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RollingHorizonConfig(strategy="greedy")
        with pytest.raises(ValueError):
            RollingHorizonConfig(delta_T=0.0)
        with pytest.raises(ValueError):
            RollingHorizonConfig(delta_T=2.0).validate([("here", 10.0)], v_c=10.0)
        assert RollingHorizonConfig.for_strategy("exact").mode == "DS"
        assert RollingHorizonConfig.for_strategy("dr").mode == "PDS"


def _world(net_type="star", rate=4800, strategy="ds", seconds=40.0, **net):
    doc = {"network": {"type": net_type, **net}, "rate": rate, "duration": 120, "seed": 4,
           "rolling": {"strategy": strategy}}
    w = World(scenario_from_dict(doc))
    while w.t < seconds - 1e-9:
        w.spawn()
        if w.step_count % w.n_tick == 0:
            planning_tick(w, w.rh, w.t)
        w.step()
    return w


class TestPlanningTick:
    def test_merge_order_irrelevant(self):
        w = _world()
        a, b = copy.deepcopy(w), copy.deepcopy(w)
        ids = list(w.intersection_ids)
        ra = planning_tick(a, a.rh, a.t, merge_order=ids)
        rb = planning_tick(b, b.rh, b.t, merge_order=ids[::-1])
        assert ra == rb
        assert ra[0] or ra[1]

    def test_each_vehicle_in_one_subproblem_per_tick(self):
        w = _world("grid", rate=3600, seconds=30.0)
        seen = {}
        for k in w.intersection_ids:
            s = w.snapshot(k)
            for v in s.area + s.segment:
                assert v.vid not in seen, "vehicle planned by two intersections at once"
                seen[v.vid] = k
            inst = build_subproblem(s, w.rh, w.net.intersection(k).conflicts, w.gaps)
            # every sub-problem only speaks about its own conflict area
            assert all(len(v.crossings) == 1 and v.crossings[0].k == k for v in inst.vehicles)

    def test_vehicles_visit_subproblems_in_route_order(self):
        doc = {"network": {"type": "grid"}, "rate": 2400, "duration": 120, "seed": 1,
               "rolling": {"strategy": "ds"}}
        w = World(scenario_from_dict(doc))
        streams = {}
        while w.t < 120 - 1e-9:
            w.spawn()
            if w.step_count % w.n_tick == 0:
                for k in w.intersection_ids:
                    s = w.snapshot(k)
                    for v in s.area + s.segment:
                        seq = streams.setdefault(v.vid, [])
                        if not seq or seq[-1] != k:
                            seq.append(k)
                planning_tick(w, w.rh, w.t)
            w.step()
        routes = {v.vid: v.route for v in w.finished}
        three = [vid for vid, r in routes.items() if r.K == 3]
        assert three
        for vid, r in routes.items():
            # sequential, never revisiting: the stream is the route itself
            assert streams[vid] == list(r.intersections)

    def test_empty_world_tick(self):
        doc = {"network": {"type": "single"}, "rate": 0, "duration": 10}
        w = World(scenario_from_dict(doc))
        assert planning_tick(w, w.rh, 0.0) == ({}, {})


class TestHandoff:
    def test_walks_route_then_exits(self):
        net = corridor()
        route = next(r for r in net.routes if r.K == 2)

        class V:
            pass

        v = V()
        v.route, v.hop = route, 0
        k2, mid = route.hops[1]
        m = net.intersection(k2).movement(mid)
        assert handoff(v, net) == (k2, m.in_side, m.in_lane)
        assert handoff(v, net) is None

    def test_gap_between_zones_is_cruised(self):
        # star arm of 400 m with l_r = 100: 100 m belong to no sub-problem
        w = World(scenario_from_dict({"network": {"type": "star"}, "rate": 0, "duration": 10}))
        z = w.division.zones(1, "S")
        assert z.zone_lengths == (200.0, 100.0, 100.0)
        assert z.label(350.0) == "outside"


class TestRepair:
    def test_keeps_gaps_and_lower_bounds(self):
        items = [RepairItem(0, "S0", "S0-N", 50.0, 10.0, math.inf),
                 RepairItem(1, "S0", "S0-W", 70.0, 10.5, math.inf),
                 RepairItem(2, "W0", "W0-E", 60.0, 10.2, math.inf)]
        times, unresolved = repair_schedule(items, AreaHistory(), NODE.conflicts, GAPS)
        assert unresolved == []
        # served by lower bound: 0, then 2 behind its conflict, then 1 behind both
        assert times == {0: 10.0, 2: 12.0, 1: 14.0}
        assert times[1] - times[0] >= GAPS.dt1
        assert NODE.conflicting("S0-W", "W0-E") and times[1] - times[2] >= GAPS.dt2
        assert all(times[it.vid] >= it.lb for it in items)

    def test_committed_vehicles_first(self):
        # vehicle 2 can no longer stop, so it keeps its slot and others yield
        items = [RepairItem(0, "S0", "S0-N", 50.0, 10.0, math.inf),
                 RepairItem(2, "W0", "W0-E", 5.0, 10.2, 10.3)]
        times, unresolved = repair_schedule(items, AreaHistory(), NODE.conflicts, GAPS)
        assert unresolved == [] and times[2] == 10.2 and times[0] == 12.2

    def test_unresolved_reported(self):
        items = [RepairItem(0, "W0", "W0-E", 5.0, 10.2, 10.3)]
        times, unresolved = repair_schedule(items, AreaHistory({"W0": 10.0}, {}), NODE.conflicts, GAPS)
        assert unresolved == [0] and times[0] == 10.3


def test_planning_log_round_trip(tmp_path):
    log = PlanningLog()
    log.append({"t": 0.0, "k": 1, "Q1": 2, "Q2": 1, "solve_time": 0.01})
    log.append({"t": 2.0, "k": 2, "Q1": 0, "Q2": 0, "solve_time": 0.0})
    path = tmp_path / "planning.jsonl"
    log.write(path)
    assert PlanningLog.read(path) == log.records
