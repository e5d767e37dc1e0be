"""Fixed-step traffic world: arrivals, motion, safety guard and metrics.

Vehicles move along lane queues towards the stop line of the next
intersection on their route.  Planned vehicles follow piecewise-constant
acceleration profiles; everyone else drifts to the cruise speed.  Conflict
areas are crossed at the entry speed, and safety is judged purely on entry
times, matching the scheduling model.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .coordinator import (
    AreaSnapshot, PlanningLog, RepairItem, ReservationTable, RollingHorizonConfig, SnapVehicle,
    handoff, planning_tick, repair_schedule,
)
from .kinematics import (
    InfeasibleTarget, KinematicLimits, LongitudinalState, SpeedProfile, _advance, can_stop,
    cruise_accel, latest_arrival_time, minimal_arrival_time, synthesize_profile,
    uncontrolled_arrival_time,
)
from .network import DivisionParams, NetworkSpec, build_network, divide_network
from .scheduling import AreaHistory, Crossing, SafetyGaps, SchedVehicle, SchedulingInstance

SCHEMA_VERSION = 1
SPAWN_MARGIN = 1.0  # metres kept before the line by unplanned vehicles


@dataclass
class ScenarioConfig:
    network: dict = field(default_factory=lambda: {"type": "corridor"})
    rate: float = 1200.0  # veh/h entering the whole network, split evenly over input lanes
    duration: float = 600.0
    dt: float = 0.05
    seed: int = 0
    division: DivisionParams = field(default_factory=DivisionParams)
    fill_segments: bool = False  # l_r = leg length - l_c on internal approaches
    limits: KinematicLimits = field(default_factory=KinematicLimits)
    gaps: SafetyGaps = field(default_factory=SafetyGaps)
    rolling: RollingHorizonConfig = field(default_factory=RollingHorizonConfig)

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("arrival rate must be non-negative")
        if self.dt <= 0:
            raise ValueError("time step must be positive")
        if self.duration < self.rolling.delta_T:
            raise ValueError("duration must cover at least one planning interval")
        n = self.rolling.delta_T / self.dt
        if abs(n - round(n)) > 1e-9:
            raise ValueError("time step must divide the planning interval")
        if self.division.delta_T != self.rolling.delta_T or self.division.v_c != self.limits.v_c:
            raise ValueError("division parameters disagree with the planning interval or cruise speed")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["division"]["l_r_overrides"] = {f"{k}{s}": v for (k, s), v in self.division.l_r_overrides.items()}
        return d


SCENARIO_SCHEMA = {
    "type": "object",
    "properties": {
        "network": {"type": "object"},
        "rate": {"type": "number", "minimum": 0},
        "duration": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer"},
        "fill_segments": {"type": "boolean"},
        "division": {"type": "object", "properties": {
            "l_c": {"type": "number"}, "l_r": {"type": "number"}}, "additionalProperties": False},
        "limits": {"type": "object", "properties": {
            k: {"type": "number"} for k in ("v_max", "v_min", "a_max", "a_min", "v_c")},
            "additionalProperties": False},
        "gaps": {"type": "object", "properties": {"dt1": {"type": "number"}, "dt2": {"type": "number"}},
                 "additionalProperties": False},
        "rolling": {"type": "object", "properties": {
            "delta_T": {"type": "number"}, "strategy": {"type": "string"},
            "w1": {"type": "number"}, "w2": {"type": "number"},
            "iterations": {"type": ["integer", "null"]}, "time_limit": {"type": ["number", "null"]},
            "no_reorder": {"type": "number"}, "exact_cap": {"type": "integer"},
            "exact_nodes": {"type": "integer"}}, "additionalProperties": False},
    },
    "additionalProperties": False,
}


def scenario_from_dict(doc: dict, **override) -> ScenarioConfig:
    """Build a scenario from a config document; ``override`` replaces top-level or rolling keys."""
    jsonschema.validate(doc, SCENARIO_SCHEMA)
    doc = json.loads(json.dumps(doc))
    rolling = dict(doc.get("rolling", {}))
    for key in ("strategy", "iterations", "delta_T", "time_limit"):
        if override.get(key) is not None:
            rolling[key] = override.pop(key)
    for key in list(override):
        if override[key] is None:
            override.pop(key)
    doc.update(override)
    lim = KinematicLimits(**doc.get("limits", {}))
    strategy = rolling.pop("strategy", "ds")
    rh = RollingHorizonConfig.for_strategy(strategy, T=float(doc.get("duration", 600.0)), **rolling)
    div = DivisionParams(delta_T=rh.delta_T, v_c=lim.v_c, **doc.get("division", {}))
    return ScenarioConfig(
        network=doc.get("network", {"type": "corridor"}), rate=float(doc.get("rate", 1200.0)),
        duration=float(doc.get("duration", 600.0)), dt=float(doc.get("dt", 0.05)),
        seed=int(doc.get("seed", 0)), division=div, fill_segments=bool(doc.get("fill_segments", False)),
        limits=lim, gaps=SafetyGaps(**doc.get("gaps", {})), rolling=rh)


# -- arrivals ---------------------------------------------------------------

def spawn_arrivals(rate: float, seed: int, duration: float, n_lanes: int) -> list[tuple[float, int]]:
    """Poisson arrivals, ``rate`` veh/h shared by ``n_lanes`` lanes, one RNG substream per lane."""
    if rate < 0:
        raise ValueError("rate must be non-negative")
    if rate == 0 or n_lanes == 0:
        return []
    mean = 3600.0 * n_lanes / rate
    out = []
    for lane, ss in enumerate(np.random.SeedSequence(seed).spawn(n_lanes)):
        rng = np.random.default_rng(ss)
        t = 0.0
        while True:
            t += rng.exponential(mean)
            if t >= duration:
                break
            out.append((t, lane))
    out.sort()
    return out


# -- vehicles ---------------------------------------------------------------

class Vehicle:
    __slots__ = ("vid", "route", "moves", "hop", "phase", "d", "v", "plan", "target",
                 "spawn_t", "origin", "tmin_ref", "entry", "assigned", "reserved", "exit_t",
                 "length", "queue", "zone", "entry_speed")

    def __init__(self, vid, route, moves, origin, spawn_t, d, v, length):
        self.vid = vid
        self.route = route
        self.moves = moves
        self.hop = 0
        self.phase = "approach"
        self.d = d
        self.v = v
        self.plan = None  # remaining [duration, accel] phases
        self.target = None  # planned entry time at the current intersection
        self.spawn_t = spawn_t
        self.origin = origin
        self.tmin_ref = {}
        self.entry = {}
        self.assigned = {}
        self.reserved = {}
        self.exit_t = None
        self.length = length
        self.queue = None
        self.zone = None
        self.entry_speed = 0.0

    @property
    def k(self) -> int:
        return self.route.hops[self.hop][0]

    @property
    def move(self):
        return self.moves[self.hop]

    @property
    def state(self) -> LongitudinalState:
        return LongitudinalState(max(self.d, 0.0), self.v)


@dataclass
class VehicleTraceRecord:
    vid: int
    route: str
    origin: str
    spawn_t: float
    exit_t: float | None
    distance: float
    crossings: list  # [k, lane, movement, t_min_ref, assigned, entry]


@dataclass
class MetricsSummary:
    N: int
    total_delay: float
    per_intersection: dict
    average_speed: float
    eta: float | None = None
    counts: dict = field(default_factory=dict)


class World:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.lim = cfg.limits
        self.gaps = cfg.gaps
        self.rh = cfg.rolling
        self.seed = cfg.seed
        self.net: NetworkSpec = build_network(cfg.network, l_c=cfg.division.l_c)
        if cfg.rolling.strategy == "exact" and len(self.net.intersections) > 2:
            raise ValueError("the exact strategy is only offered on networks with at most two "
                             "intersections; use ds, pds, dr or fifo on larger networks")
        params = cfg.division
        if cfg.fill_segments:
            over = dict(params.l_r_overrides)
            for leg in self.net.internal_legs():
                over.setdefault((leg.u, leg.u_side), leg.length - params.l_c)
                over.setdefault((leg.v, leg.v_side), leg.length - params.l_c)
            params = DivisionParams(params.l_c, params.l_r, params.delta_T, params.v_c, over)
        self.division = divide_network(self.net, params)
        self.l_c = params.l_c
        self.intersection_ids = [i.id for i in self.net.intersections]
        self.inputs = self.net.input_lanes()
        self.arrivals = spawn_arrivals(cfg.rate, cfg.seed, cfg.duration, len(self.inputs))
        self.route_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7]))
        self._menus = {}
        self._hop_cache = {}
        self.next_arrival = 0
        self.pending = {i: [] for i in range(len(self.inputs))}
        self.queues = {}
        for node in self.net.intersections:
            for side, n in node.lanes.items():
                for j in range(n):
                    self.queues[(node.id, side, j)] = []
        self.crossing = []
        self.vehicles = {}
        self.finished = []
        self.history = {k: ({}, {}) for k in self.intersection_ids}
        self.reservations = ReservationTable()
        self.prev_order = {}
        self.plan_log = PlanningLog()
        self.step_count = 0
        self.n_tick = int(round(self.rh.delta_T / cfg.dt))
        self.counts = {"spawned": 0, "deferred": 0, "clamps": 0, "repairs": 0, "unresolved": 0,
                       "area_entries": 0, "reserved_entries": 0, "cold_entries": 0,
                       "relaxed_reservations": 0, "membership_violations": 0, "stop_guard": 0}
        self._vid = 0

    @property
    def t(self) -> float:
        return self.step_count * self.cfg.dt

    # -- planning interface -------------------------------------------------

    def approaching(self, k: int):
        node = self.net.intersection(k)
        for side, n in node.lanes.items():
            for j in range(n):
                yield (k, side, j), self.queues[(k, side, j)]

    def snapshot(self, k: int) -> AreaSnapshot:
        now = self.t
        area, seg = [], []
        for (_, side, _), q in self.approaching(k):
            zones = self.division.zones(k, side)
            lane_area = []
            for veh in q:
                st = veh.state
                if veh.d < zones.area_end:
                    frozen = veh.target is not None and (
                        veh.target <= now + self.rh.no_reorder or not can_stop(st, self.lim))
                    lane_area.append([veh, now + minimal_arrival_time(st, self.lim), frozen])
                elif veh.d < zones.segment_end:
                    seg.append(SnapVehicle(veh.vid, veh.move.lane_key, veh.move.id, veh.d, veh.v,
                                           now + uncontrolled_arrival_time(st, self.lim, self.l_c)))
            # a frozen vehicle freezes every planned vehicle ahead of it in its lane
            hold = False
            for row in reversed(lane_area):
                if row[2]:
                    hold = True
                elif hold and row[0].target is not None:
                    row[2] = True
            for veh, tm, frozen in lane_area:
                area.append(SnapVehicle(veh.vid, veh.move.lane_key, veh.move.id, veh.d, veh.v,
                                        tm, veh.target, frozen))
        lane_last, mov_last = self.history[k]
        return AreaSnapshot(k, now, tuple(area), tuple(seg), AreaHistory(dict(lane_last), dict(mov_last)))

    def log_plan(self, rec: dict) -> None:
        self.plan_log.append(rec)

    def apply_plans(self, assignments: dict, reservations: dict, t_p: float) -> None:
        touched = set()
        for (vid, k), t in sorted(assignments.items()):
            veh = self.vehicles[vid]
            self.reservations.pop(k, vid)
            if veh.target is not None and veh.plan is not None and abs(veh.target - t) <= 1e-9:
                continue
            if not self._drive_to(veh, t):
                touched.add(k)
        for (vid, k), t in sorted(reservations.items()):
            self.reservations.reserve(k, vid, t, t_p)
        for k in sorted(touched):
            self.repair(k)

    def global_instance(self, cfg: RollingHorizonConfig):
        """Whole-network instance over every approaching vehicle (exact strategy)."""
        now = self.t
        lim = self.lim
        conflicts = {i.id: i.conflicts for i in self.net.intersections}
        hist = {k: (dict(a), dict(b)) for k, (a, b) in self.history.items()}
        vehicles, chain_rows, area_ids = [], {}, set()
        for key, q in self.queues.items():
            k = key[0]
            zones = self.division.zones(k, key[1])
            for veh in q:
                st = veh.state
                in_area = veh.d < zones.area_end
                frozen = in_area and veh.target is not None and (
                    veh.target <= now + cfg.no_reorder or not can_stop(st, lim))
                hops = self._hops(veh)
                if frozen:
                    ll, ml = hist[k]
                    ll[veh.move.lane_key] = max(ll.get(veh.move.lane_key, -math.inf), veh.target)
                    ml[veh.move.id] = max(ml.get(veh.move.id, -math.inf), veh.target)
                    if veh.hop + 1 >= len(veh.route.hops):
                        continue
                    t0 = veh.target + hops[0]
                    start, dist = veh.hop + 1, veh.d + self._leg_after(veh, veh.hop)
                else:
                    if in_area:
                        t0 = now + minimal_arrival_time(st, lim)
                        area_ids.add(veh.vid)
                    else:
                        t0 = now + uncontrolled_arrival_time(st, lim, self.l_c)
                    start, dist = veh.hop, veh.d
                crossings, t = [], t0
                for h in range(start, len(veh.route.hops)):
                    m = veh.moves[h]
                    hop = hops[h - veh.hop] if h + 1 < len(veh.route.hops) else 0.0
                    crossings.append(Crossing(veh.route.hops[h][0], m.lane_key, m.id, t, hop))
                    t += hop
                vehicles.append(SchedVehicle(veh.vid, tuple(crossings), "area" if in_area else "segment"))
                first = crossings[0]
                chain_rows.setdefault((first.k, first.lane), []).append((dist, veh.vid))
        chains = {key: tuple(v for _, v in sorted(rows)) for key, rows in chain_rows.items()}
        inst = SchedulingInstance(tuple(vehicles), conflicts, self.gaps, None, chains,
                                  {k: AreaHistory(a, b) for k, (a, b) in hist.items()},
                                  w1=cfg.w1, w2=cfg.w2)
        return inst, area_ids

    def _leg_after(self, veh, h) -> float:
        k = veh.route.hops[h][0]
        leg = self.net.leg_at(k, veh.moves[h].out_side)
        return leg.length + self.net.intersection(k).area_length

    def _hops(self, veh) -> list[float]:
        """Minimal entry-to-entry times between consecutive crossings from the current hop."""
        return [self._hop_time(veh.route.hops[h][0], veh.moves[h].out_side)
                for h in range(veh.hop, len(veh.route.hops) - 1)]

    def _hop_time(self, k: int, out_side: str) -> float:
        key = (k, out_side)
        if key not in self._hop_cache:
            leg = self.net.leg_at(k, out_side)
            self._hop_cache[key] = self.net.intersection(k).area_length / self.lim.v_max + \
                uncontrolled_arrival_time(LongitudinalState(leg.length, self.lim.v_max), self.lim, self.l_c)
        return self._hop_cache[key]

    # -- profile handling ---------------------------------------------------

    def _drive_to(self, veh: Vehicle, t: float) -> bool:
        try:
            prof = synthesize_profile(veh.state, t - self.t, self.lim)
        except InfeasibleTarget:
            veh.target = t
            return False
        veh.plan = [list(p) for p in prof.phases]
        veh.target = t
        return True

    def repair(self, k: int) -> None:
        """Re-time the planned vehicles of one area after a disturbance."""
        self.counts["repairs"] += 1
        now = self.t
        node = self.net.intersection(k)
        items, vehs = [], {}
        for (_, side, _), q in self.approaching(k):
            for veh in q:
                if veh.target is None:
                    continue
                st = veh.state
                lb = max(veh.target, now + minimal_arrival_time(st, self.lim))
                items.append(RepairItem(veh.vid, veh.move.lane_key, veh.move.id, veh.d, lb,
                                        now + latest_arrival_time(st, self.lim)))
                vehs[veh.vid] = veh
        lane_last, mov_last = self.history[k]
        times, unresolved = repair_schedule(items, AreaHistory(lane_last, mov_last),
                                            node.conflicts, self.gaps)
        self.counts["unresolved"] += len(unresolved)
        for vid, t in sorted(times.items()):
            veh = vehs[vid]
            if veh.plan is not None and abs(t - veh.target) <= 1e-9:
                continue
            if not self._drive_to(veh, t):
                # only possible for unresolved vehicles: take the closest admissible profile
                self._drive_closest(veh, t)

    def _drive_closest(self, veh: Vehicle, t: float) -> None:
        st = veh.state
        lo = self.t + minimal_arrival_time(st, self.lim)
        hi = self.t + latest_arrival_time(st, self.lim)
        t = min(max(t, lo), hi)
        try:
            prof = synthesize_profile(st, t - self.t, self.lim)
        except InfeasibleTarget:
            prof = SpeedProfile(((max(st.distance, 0.0) / max(st.velocity, 1e-6), 0.0),))
            t = self.t + prof.duration
        veh.plan = [list(p) for p in prof.phases]
        veh.target = t

    # -- stepping -----------------------------------------------------------

    def run(self):
        eps = 1e-9
        while self.t < self.cfg.duration - eps:
            self.spawn()
            if self.step_count % self.n_tick == 0:
                self.audit_membership()
                planning_tick(self, self.rh, self.t)
            self.step()
        return self

    def spawn(self) -> None:
        now = self.t
        while self.next_arrival < len(self.arrivals) and self.arrivals[self.next_arrival][0] <= now + 1e-12:
            t, lane = self.arrivals[self.next_arrival]
            self.pending[lane].append(t)
            self.next_arrival += 1
        for lane, waiting in self.pending.items():
            if not waiting:
                continue
            k, side, j = self.inputs[lane]
            leg = self.net.leg_at(k, side)
            q = self.queues[(k, side, j)]
            if q and leg.length - q[-1].d < self.gaps.dt1 * self.lim.v_c:
                self.counts["deferred"] += 1  # lane-steps with a blocked entry
                continue
            waiting.pop(0)
            routes, probs = self._route_menu(k, side, j)
            route = routes[0] if len(routes) == 1 else routes[int(self.route_rng.choice(len(routes), p=probs))]
            moves = [self.net.intersection(kk).movement(mid) for kk, mid in route.hops]
            length = leg.length + sum(self._leg_after_route(route, moves, h) for h in range(len(moves)))
            veh = Vehicle(self._vid, route, moves, f"{k}{side}{j}", now, leg.length, self.lim.v_c, length)
            veh.tmin_ref[k] = now + uncontrolled_arrival_time(veh.state, self.lim, self.l_c)
            self._vid += 1
            self.vehicles[veh.vid] = veh
            veh.queue = (k, side, j)
            q.append(veh)
            self.counts["spawned"] += 1
            self._zone_update(veh)

    def _route_menu(self, k, side, j):
        key = (k, side, j)
        if key not in self._menus:
            routes = self.net.routes_from(k, side, j)
            self._menus[key] = (routes, self.net.route_probabilities(routes))
        return self._menus[key]

    def _leg_after_route(self, route, moves, h) -> float:
        k = route.hops[h][0]
        node = self.net.intersection(k)
        if h + 1 < len(moves):
            return node.area_length + self.net.leg_at(k, moves[h].out_side).length
        return node.area_length

    def step(self) -> None:
        dt = self.cfg.dt
        now = self.t
        crossing_before = self.crossing
        self.crossing = []
        for q in self.queues.values():
            for veh in list(q):
                if self._move_approach(veh, now, dt):
                    q.remove(veh)
        for veh in crossing_before:
            self._move_in_area(veh, now, dt, dt)
        self.step_count += 1
        self._guard()
        for key, q in self.queues.items():
            for veh in q:
                self._zone_update(veh)

    def _move_approach(self, veh: Vehicle, now: float, dt: float) -> bool:
        """Advance an approaching vehicle; True when it entered the conflict area."""
        lim = self.lim
        if veh.plan is not None:
            left = dt
            d, v = veh.d, veh.v
            plan = veh.plan
            while plan and left > 0.0:
                dur, acc = plan[0]
                tau = dur if dur <= left else left
                d, v = _advance(d, v, acc, tau, lim.v_min, lim.v_max)
                left -= tau
                if tau >= dur:
                    plan.pop(0)
                else:
                    plan[0][0] = dur - tau
            if not plan:
                # profile finished inside the step: the vehicle is at the line
                veh.d, veh.v = 0.0, v
                t_entry = now + (dt - left)
                self._enter(veh, t_entry)
                self._move_in_area(veh, now, dt, left)
                return True
            veh.d, veh.v = d, v
            return False
        # uncontrolled: settle at v_c, but never run into the line without a plan
        acc = cruise_accel(veh.v, lim)
        zones = self.division.zones(veh.k, veh.move.in_side)
        if veh.d < zones.area_end or veh.d - veh.v * dt < zones.area_end:
            brake = veh.v * veh.v / (2.0 * -lim.a_min)
            if veh.d - veh.v * dt - brake < SPAWN_MARGIN + 0.5 * lim.v_max * dt:
                acc = lim.a_min
                self.counts["stop_guard"] += 1
        if acc > 0:
            veh.d, veh.v = _advance(veh.d, veh.v, acc, dt, lim.v_min, lim.v_c)
        elif acc < 0:
            lo = 0.0 if acc == lim.a_min and veh.v <= lim.v_c else lim.v_c
            veh.d, veh.v = _advance(veh.d, veh.v, acc, dt, lo, lim.v_max)
        else:
            veh.d -= veh.v * dt
        if veh.d < 0.1:
            veh.d = 0.1
        return False

    def _enter(self, veh: Vehicle, t_entry: float) -> None:
        k = veh.k
        m = veh.move
        veh.entry[k] = t_entry
        veh.assigned[k] = veh.target
        lane_last, mov_last = self.history[k]
        lane_last[m.lane_key] = max(lane_last.get(m.lane_key, -math.inf), t_entry)
        mov_last[m.id] = max(mov_last.get(m.id, -math.inf), t_entry)
        veh.phase = "crossing"
        veh.plan = None
        veh.target = None
        veh.entry_speed = max(veh.v, 1.0)
        veh.d = self.net.intersection(k).area_length
        self.reservations.pop(k, veh.vid)

    def _move_in_area(self, veh: Vehicle, now: float, dt: float, tau: float) -> None:
        veh.d -= veh.entry_speed * tau
        if veh.d > 0.0:
            self.crossing.append(veh)
            return
        over = -veh.d
        t_exit = now + dt - over / veh.entry_speed
        nxt = handoff(veh, self.net)
        if nxt is None:
            veh.exit_t = t_exit
            veh.phase = "done"
            self.finished.append(veh)
            del self.vehicles[veh.vid]
            self.reservations.drop_vehicle(veh.vid)
            return
        k, side, j = nxt
        leg = self.net.leg_at(k, side)
        # unobstructed reference: previous entry plus the minimal hop
        k_prev = veh.route.hops[veh.hop - 1][0]
        veh.tmin_ref[k] = veh.entry[k_prev] + self._hop_time(k_prev, veh.moves[veh.hop - 1].out_side)
        veh.phase = "approach"
        veh.d = leg.length
        veh.v = veh.entry_speed
        veh.zone = None
        rem = over / veh.entry_speed
        lim = self.lim
        acc = cruise_accel(veh.v, lim)
        if acc > 0:
            veh.d, veh.v = _advance(veh.d, veh.v, acc, rem, lim.v_min, lim.v_c)
        elif acc < 0:
            veh.d, veh.v = _advance(veh.d, veh.v, acc, rem, lim.v_c, lim.v_max)
        else:
            veh.d -= veh.v * rem
        veh.queue = (k, side, j)
        self.queues[(k, side, j)].append(veh)

    def _guard(self) -> None:
        dt1 = self.gaps.dt1
        for key, q in self.queues.items():
            for i in range(1, len(q)):
                lead, fol = q[i - 1], q[i]
                need = max(2.0, dt1 * fol.v)
                if fol.d - lead.d < need - 1e-6:
                    fol.v = min(fol.v, lead.v)
                    fol.d = lead.d + max(2.0, dt1 * fol.v)
                    self.counts["clamps"] += 1
                    if fol.target is not None:
                        if not self._drive_to(fol, fol.target):
                            self.repair(fol.k)

    def _zone_update(self, veh: Vehicle) -> None:
        k = veh.k
        zones = self.division.zones(k, veh.move.in_side)
        z = zones.label(veh.d)
        if z == veh.zone:
            return
        prev, veh.zone = veh.zone, z
        if z == "area" and prev != "area":
            self.counts["area_entries"] += 1
            res = self.reservations.pop(k, veh.vid)
            veh.reserved[k] = res is not None
            if res is None:
                self.counts["cold_entries"] += 1
                return
            self.counts["reserved_entries"] += 1
            if not self._drive_to(veh, res[0]):
                self.counts["relaxed_reservations"] += 1
            # slot the newcomer into the area's current schedule
            self.repair(k)

    def audit_membership(self) -> None:
        seen_area, seen_seg = set(), set()
        for k in self.intersection_ids:
            for (_, side, _), q in self.approaching(k):
                zones = self.division.zones(k, side)
                for veh in q:
                    lab = zones.label(veh.d)
                    target = seen_area if lab == "area" else seen_seg if lab == "segment" else None
                    if target is None:
                        continue
                    if veh.vid in target:
                        self.counts["membership_violations"] += 1
                    target.add(veh.vid)

    # -- results ------------------------------------------------------------

    def traces(self) -> list[VehicleTraceRecord]:
        out = []
        for veh in sorted(self.finished + list(self.vehicles.values()), key=lambda v: v.vid):
            rows = []
            for h, (k, _) in enumerate(veh.route.hops):
                if k not in veh.entry:
                    break
                m = veh.moves[h]
                rows.append([k, m.lane_key, m.id, veh.tmin_ref.get(k), veh.assigned.get(k), veh.entry[k]])
            out.append(VehicleTraceRecord(veh.vid, veh.route.id, veh.origin, veh.spawn_t, veh.exit_t,
                                          veh.length, rows))
        return out


# -- audit and metrics ------------------------------------------------------

def audit_safety(traces: list[VehicleTraceRecord], net: NetworkSpec, gaps: SafetyGaps,
                 tol: float = 1e-6) -> list[dict]:
    """Entry-time gap violations at every conflict area."""
    by_k = {}
    for tr in traces:
        for k, lane, mov, _, _, entry in tr.crossings:
            by_k.setdefault(k, []).append((entry, tr.vid, lane, mov))
    out = []
    for k, rows in sorted(by_k.items()):
        node = net.intersection(k)
        rows.sort()
        last_lane = {}
        for i, (t, vid, lane, mov) in enumerate(rows):
            if lane in last_lane:
                t0, v0 = last_lane[lane]
                if t - t0 < gaps.dt1 - tol:
                    out.append({"k": k, "kind": "lane", "pair": [v0, vid], "shortfall": gaps.dt1 - (t - t0)})
            last_lane[lane] = (t, vid)
            for t2, vid2, lane2, mov2 in rows[i + 1:]:
                if t2 - t >= gaps.dt2 - tol:
                    break
                if lane2 != lane and node.conflicting(mov, mov2):
                    out.append({"k": k, "kind": "conflict", "pair": [vid, vid2],
                                "shortfall": gaps.dt2 - (t2 - t)})
    return out


def summarize(traces: list[VehicleTraceRecord], baseline: "MetricsSummary | None" = None,
              eta_at: int = 1) -> MetricsSummary:
    """Delays per vehicle and intersection, average speed, and eta against a baseline."""
    totals, per_k = [], {}
    speeds = []
    for tr in traces:
        if not tr.crossings:
            continue
        j = 0.0
        for k, _, _, tmin, _, entry in tr.crossings:
            jk = entry - tmin
            j += jk
            per_k.setdefault(k, []).append(jk)
        totals.append(j)
        if tr.exit_t is not None:
            speeds.append(tr.distance / (tr.exit_t - tr.spawn_t))
    N = len(totals)
    s = MetricsSummary(
        N=N,
        total_delay=float(sum(totals) / N) if N else 0.0,
        per_intersection={str(k): float(sum(v) / len(v)) for k, v in sorted(per_k.items())},
        average_speed=float(sum(speeds) / len(speeds)) if speeds else 0.0,
        counts={"completed": len(speeds), "crossings": sum(len(v) for v in per_k.values())},
    )
    if baseline is not None:
        s.eta = eta(baseline.per_intersection.get(str(eta_at), 0.0), s.per_intersection.get(str(eta_at), 0.0))
    return s


def eta(j_base: float, j_new: float) -> float:
    """Percentage delay reduction of ``j_new`` relative to ``j_base``."""
    if j_base <= 0:
        raise ValueError("eta needs a baseline with positive delay")
    return (j_base - j_new) / j_base * 100.0


@dataclass
class RunResult:
    config: ScenarioConfig
    summary: MetricsSummary
    traces: list
    violations: list
    counts: dict
    plan_log: PlanningLog

    def summary_doc(self) -> dict:
        return {"schema": SCHEMA_VERSION, "seed": self.config.seed, "strategy": self.config.rolling.strategy,
                "config": self.config.to_dict(), "metrics": asdict(self.summary),
                "counts": dict(sorted(self.counts.items())), "violations": len(self.violations)}


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    w = World(cfg).run()
    traces = w.traces()
    violations = audit_safety(traces, w.net, cfg.gaps)
    summary = summarize(traces)
    counts = dict(w.counts)
    counts["max_entry_error"] = max((abs(r[5] - r[4]) for tr in traces for r in tr.crossings
                                     if r[4] is not None), default=0.0)
    counts["unplanned_entries"] = sum(r[4] is None for tr in traces for r in tr.crossings)
    return RunResult(cfg, summary, traces, violations, counts, w.plan_log)


TRACE_COLUMNS = ["vid", "route", "origin", "spawn_t", "exit_t", "distance", "crossings"]


def write_traces(traces: list[VehicleTraceRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# trace schema {SCHEMA_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for tr in traces:
            w.writerow([tr.vid, tr.route, tr.origin, repr(tr.spawn_t),
                        "" if tr.exit_t is None else repr(tr.exit_t), repr(tr.distance),
                        json.dumps(tr.crossings)])


def read_traces(path) -> list[VehicleTraceRecord]:
    with open(path) as fh:
        lines = [l for l in fh if not l.startswith("#")]
    out = []
    for row in csv.DictReader(io.StringIO("".join(lines))):
        out.append(VehicleTraceRecord(int(row["vid"]), row["route"], row["origin"], float(row["spawn_t"]),
                                      float(row["exit_t"]) if row["exit_t"] else None,
                                      float(row["distance"]), json.loads(row["crossings"])))
    return out


def write_summary(result: RunResult, path) -> None:
    Path(path).write_text(json.dumps(result.summary_doc(), indent=2, sort_keys=True) + "\n")
