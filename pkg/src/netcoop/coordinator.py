"""Distributed rolling-horizon coordination.

Every ``delta_T`` seconds each intersection takes a snapshot of its area and
segment vehicles, builds a single-intersection sub-problem and solves it.
All sub-problems read the same frozen world, so solving them in any order
(or in parallel) gives the same plans.  In-area vehicles receive arrival
times to drive towards; segment vehicles receive advisory reservations that
turn into trajectories when they cross into the area.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

from .kinematics import (
    KinematicLimits, LongitudinalState, latest_arrival_time, minimal_arrival_time,
    uncontrolled_arrival_time,
)
from .network import check_reservation_bound
from .scheduling import (
    AREA, SEGMENT, AreaHistory, Crossing, SchedVehicle, SchedulingInstance, SafetyGaps,
    forward_pass, objective,
)
from .solvers import SolverBudget, solve_exact, solve_fifo, solve_greedy_resequence, solve_mcts
from .solvers.fifo import fifo_global
from .solvers.resequence import append_fifo

FIFO_PURE = True
STRATEGIES = ("fifo", "dr", "ds", "pds", "exact")


@dataclass(frozen=True)
class RollingHorizonConfig:
    delta_T: float = 2.0
    T: float = 600.0
    strategy: str = "ds"
    mode: str = "DS"  # DS keeps segment vehicles, PDS drops them
    w1: float = 1.0
    w2: float = 0.5
    iterations: int | None = 200  # MCTS iterations per sub-problem; None = wall clock only
    time_limit: float | None = 0.1
    no_reorder: float = 3.0  # seconds before entry when an order becomes final
    exact_cap: int = 16
    exact_nodes: int = 200_000

    def __post_init__(self):
        if not (0 < self.delta_T <= self.T):
            raise ValueError("need 0 < delta_T <= T")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.mode not in ("DS", "PDS"):
            raise ValueError("mode must be DS or PDS")
        if self.no_reorder < 0:
            raise ValueError("no_reorder must be non-negative")

    @classmethod
    def for_strategy(cls, strategy: str, **kw) -> "RollingHorizonConfig":
        mode = "DS" if strategy in ("ds", "exact") else "PDS"
        return cls(strategy=strategy, mode=mode, **kw)

    def budget(self, seed: int) -> SolverBudget:
        return SolverBudget(time_limit=self.time_limit if self.iterations is None else None,
                            iterations=self.iterations, seed=seed)

    def validate(self, l_r_values, v_c: float) -> None:
        for where, l_r in l_r_values:
            check_reservation_bound(l_r, v_c, self.delta_T, where)


@dataclass(frozen=True)
class SnapVehicle:
    vid: int
    lane: str
    movement: str
    distance: float
    velocity: float
    t_min: float  # absolute time
    assigned: float | None = None  # current planned entry time, if any
    frozen: bool = False


@dataclass(frozen=True)
class AreaSnapshot:
    k: int
    t: float
    area: tuple[SnapVehicle, ...]  # S_c, lane order preserved (leader first)
    segment: tuple[SnapVehicle, ...]  # S_r
    history: AreaHistory = field(default_factory=AreaHistory)


@dataclass
class ReservationTable:
    """k -> {vid: (reserved time, issuing tick)}."""

    table: dict = field(default_factory=dict)

    def reserve(self, k: int, vid: int, t: float, tick: float) -> None:
        self.table.setdefault(k, {})[vid] = (t, tick)

    def get(self, k: int, vid: int):
        return self.table.get(k, {}).get(vid)

    def pop(self, k: int, vid: int):
        return self.table.get(k, {}).pop(vid, None)

    def drop_vehicle(self, vid: int) -> None:
        for d in self.table.values():
            d.pop(vid, None)


@dataclass
class SubPlan:
    k: int
    order: tuple
    times: dict  # vid -> time
    zones: dict  # vid -> zone tag
    log: dict


# -- sub-problems -----------------------------------------------------------

def build_subproblem(snap: AreaSnapshot, cfg: RollingHorizonConfig, conflicts: frozenset,
                     gaps: SafetyGaps = SafetyGaps()) -> SchedulingInstance:
    """Single-intersection instance: free area vehicles (w1) and segment vehicles (w2, DS only).

    Frozen vehicles keep their time and act as committed traffic.
    """
    k = snap.k
    lane_last = dict(snap.history.lane_last)
    mov_last = dict(snap.history.mov_last)
    vehicles, chains = [], {}
    members = [(v, AREA) for v in snap.area]
    if cfg.mode == "DS":
        members += [(v, SEGMENT) for v in snap.segment]
    for v, zone in members:
        if v.frozen:
            lane_last[v.lane] = max(lane_last.get(v.lane, -math.inf), v.assigned)
            mov_last[v.movement] = max(mov_last.get(v.movement, -math.inf), v.assigned)
            continue
        vehicles.append(SchedVehicle(v.vid, (Crossing(k, v.lane, v.movement, v.t_min),), zone))
        chains.setdefault((k, v.lane), []).append((v.distance, v.vid))
    lane_chains = {key: tuple(vid for _, vid in sorted(c)) for key, c in chains.items()}
    return SchedulingInstance(
        vehicles=tuple(vehicles), conflicts={k: conflicts}, gaps=gaps, scope=k,
        lane_chains=lane_chains, history={k: AreaHistory(lane_last, mov_last)},
        w1=cfg.w1, w2=cfg.w2)


def solve_subproblem(inst: SchedulingInstance, cfg: RollingHorizonConfig, seed: int, previous=()):
    s = cfg.strategy
    if s in ("ds", "pds"):
        return solve_mcts(inst, cfg.budget(seed), warm_start=previous)
    if s == "dr":
        return solve_greedy_resequence(inst, previous)
    if s == "fifo":
        return solve_fifo(inst) if FIFO_PURE else append_fifo(inst, previous)
    raise ValueError(f"strategy {s!r} has no single-intersection solver")


def plan_area(snap: AreaSnapshot, cfg: RollingHorizonConfig, conflicts, gaps, seed: int,
              previous=()) -> SubPlan:
    inst = build_subproblem(snap, cfg, conflicts, gaps)
    res = solve_subproblem(inst, cfg, seed, previous)
    a = forward_pass(inst, res.order) if inst.vehicles else None
    times = {vid: a.times[(vid, snap.k)] for vid in res.order.get(snap.k, ())} if a else {}
    log = {"t": snap.t, "k": snap.k, "Q1": inst.Q1, "Q2": inst.Q2,
           "frozen": sum(v.frozen for v in snap.area), "solver": res.solver,
           "iterations": res.iterations, "objective": res.objective,
           "complete": res.complete, "fallback": res.fallback, "solve_time": res.solve_time}
    return SubPlan(snap.k, tuple(res.order.get(snap.k, ())), times,
                   {v.vid: v.zone for v in inst.vehicles}, log)


def tick_seed(master: int, t_p: float, k: int) -> int:
    return (master * 1_000_003 + int(round(t_p * 1000)) * 131 + k) % (2 ** 31)


def planning_tick(world, cfg: RollingHorizonConfig, t_p: float, merge_order=None):
    """One synchronous planning round.

    Returns (assignments, reservations): ``{(vid, k): t}`` for in-area
    vehicles and for reserved segment vehicles.  ``merge_order`` permutes
    the order in which per-intersection results are applied.
    """
    if cfg.strategy == "exact":
        return _exact_tick(world, cfg, t_p)
    snaps = {k: world.snapshot(k) for k in world.intersection_ids}  # barrier: read everything first
    plans = {}
    for k, snap in snaps.items():
        node = world.net.intersection(k)
        plans[k] = plan_area(snap, cfg, node.conflicts, world.gaps,
                             tick_seed(world.seed, t_p, k), world.prev_order.get(k, ()))
    assignments, reservations = {}, {}
    for k in (merge_order or sorted(plans)):
        p = plans[k]
        world.log_plan(p.log)
        world.prev_order[k] = p.order
        for vid, t in p.times.items():
            if p.zones[vid] == AREA:
                assignments[(vid, k)] = t
            else:
                reservations[(vid, k)] = t
    world.apply_plans(assignments, reservations, t_p)
    return assignments, reservations


# -- global planning (exact strategy) ---------------------------------------

def _exact_tick(world, cfg: RollingHorizonConfig, t_p: float):
    inst, area_ids = world.global_instance(cfg)
    log = {"t": t_p, "k": 0, "Q1": len(area_ids), "Q2": len(inst.vehicles) - len(area_ids),
           "frozen": 0, "solver": "exact", "iterations": 0, "objective": 0.0,
           "complete": True, "fallback": False, "solve_time": 0.0}
    if not inst.vehicles:
        world.log_plan(log)
        return {}, {}
    start = time.perf_counter()
    chosen = _chain_closed_subset(inst, cfg.exact_cap)
    sub = SchedulingInstance(
        tuple(inst.vehicle(v) for v in chosen), inst.conflicts, inst.gaps, None,
        {key: tuple(v for v in c if v in chosen) for key, c in inst.lane_chains.items()
         if any(v in chosen for v in c)},
        inst.history)
    res = solve_exact(sub, SolverBudget(time_limit=None, iterations=cfg.exact_nodes))
    order = fifo_global(inst, forced=res.order)
    a = forward_pass(inst, order)
    log.update(iterations=res.iterations, objective=objective(a, inst), complete=res.complete,
               solve_time=time.perf_counter() - start, free=len(chosen))
    world.log_plan(log)
    assignments, reservations = {}, {}
    for (vid, k), t in a.times.items():
        if vid in area_ids and k == inst.vehicle(vid).crossings[0].k:
            assignments[(vid, k)] = t
        else:
            reservations[(vid, k)] = t
    world.apply_plans(assignments, reservations, t_p)
    return assignments, reservations


def _chain_closed_subset(inst: SchedulingInstance, cap: int) -> set:
    """Up to ``cap`` vehicles in FIFO order, closed under lane precedence at their next crossing."""
    ahead = {}
    for chain in inst.lane_chains.values():
        for i, vid in enumerate(chain):
            ahead[vid] = chain[:i]
    def closure(vid, acc):
        if vid in acc:
            return
        acc.add(vid)
        for u in ahead[vid]:
            closure(u, acc)
    chosen = set()
    for v in sorted(inst.vehicles, key=lambda v: (v.crossings[0].t_min, v.crossings[0].lane, v.vid)):
        acc = set(chosen)
        closure(v.vid, acc)
        if len(acc) > cap:
            break
        chosen = acc
    return chosen


# -- local repair -----------------------------------------------------------

@dataclass(frozen=True)
class RepairItem:
    vid: int
    lane: str
    movement: str
    distance: float
    lb: float  # max(previous target, current minimal time)
    latest: float


def repair_schedule(items: list[RepairItem], history: AreaHistory, conflicts: frozenset,
                    gaps: SafetyGaps) -> tuple[dict, list]:
    """Re-time an area's planned vehicles keeping their order; times only grow.

    Vehicles that can no longer stop before the line are served first.
    Returns (times, unresolved vids).
    """
    chains = {}
    for it in items:
        chains.setdefault(it.lane, []).append(it)
    for c in chains.values():
        c.sort(key=lambda it: it.distance)
    pos = {lane: 0 for lane in chains}
    lane_last = dict(history.lane_last)
    mov_last = dict(history.mov_last)
    conf = {}
    for p in conflicts:
        a, b = tuple(p)
        conf.setdefault(a, []).append(b)
        conf.setdefault(b, []).append(a)
    times, unresolved = {}, []
    while True:
        heads = [c[pos[l]] for l, c in chains.items() if pos[l] < len(c)]
        if not heads:
            break
        it = min(heads, key=lambda h: (h.latest == math.inf, h.lb, h.lane, h.vid))
        pos[it.lane] += 1
        t = it.lb
        x = lane_last.get(it.lane)
        if x is not None and x + gaps.dt1 > t:
            t = x + gaps.dt1
        for m in conf.get(it.movement, ()):
            x = mov_last.get(m)
            if x is not None and x + gaps.dt2 > t:
                t = x + gaps.dt2
        if t > it.latest + 1e-9:
            unresolved.append(it.vid)
            t = it.latest
        times[it.vid] = t
        lane_last[it.lane] = max(lane_last.get(it.lane, -math.inf), t)
        mov_last[it.movement] = max(mov_last.get(it.movement, -math.inf), t)
    return times, unresolved


def handoff(vehicle, net):
    """Advance a vehicle past its current intersection.

    Returns (next intersection, side, lane) or None when the route is done.
    """
    vehicle.hop += 1
    if vehicle.hop >= len(vehicle.route.hops):
        return None
    k, mid = vehicle.route.hops[vehicle.hop]
    m = net.intersection(k).movement(mid)
    return k, m.in_side, m.in_lane


class PlanningLog:
    """Line-delimited JSON planning trace."""

    def __init__(self):
        self.records = []

    def append(self, rec: dict) -> None:
        self.records.append(rec)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r, sort_keys=True) + "\n")

    @staticmethod
    def read(path) -> list[dict]:
        with open(path) as fh:
            return [json.loads(line) for line in fh if line.strip()]


def area_t_min(state: LongitudinalState, lim: KinematicLimits, now: float) -> float:
    return now + minimal_arrival_time(state, lim)


def segment_t_min(state: LongitudinalState, lim: KinematicLimits, l_c: float, now: float) -> float:
    return now + uncontrolled_arrival_time(state, lim, l_c)


def latest_time(state: LongitudinalState, lim: KinematicLimits, now: float) -> float:
    return now + latest_arrival_time(state, lim)
