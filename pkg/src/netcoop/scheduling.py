"""Arrival-time scheduling: instances, passing orders and their evaluation.

A passing order fixes, for every conflict area, the sequence in which
vehicles enter it.  All constraints are difference bounds, so for a fixed
order the earliest feasible times follow from a single forward pass.  This
replaces the big-M binaries of a mixed-integer formulation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

AREA = "area"
SEGMENT = "segment"


class InfeasibleOrder(ValueError):
    """Order violates lane precedence or induces a causality cycle."""


@dataclass(frozen=True)
class SafetyGaps:
    dt1: float = 1.5  # same lane
    dt2: float = 2.0  # conflicting movements

    def __post_init__(self):
        if self.dt1 <= 0 or self.dt2 <= 0:
            raise ValueError("safety gaps must be positive")


@dataclass(frozen=True)
class Crossing:
    k: int
    lane: str
    movement: str
    t_min: float
    hop: float = 0.0  # minimal time from this entry to the next entry on the route


@dataclass(frozen=True)
class SchedVehicle:
    vid: int
    crossings: tuple[Crossing, ...]
    zone: str = AREA

    def crossing_at(self, k: int) -> Crossing:
        for c in self.crossings:
            if c.k == k:
                return c
        raise KeyError(f"vehicle {self.vid} does not cross {k}")

    @property
    def free_final(self) -> float:
        """Free-flow entry time at the last crossing."""
        t = self.crossings[0].t_min
        for c in self.crossings[:-1]:
            t += c.hop
        return t


@dataclass(frozen=True)
class AreaHistory:
    """Entry times of vehicles already committed at one conflict area."""

    lane_last: Mapping[str, float] = field(default_factory=dict)
    mov_last: Mapping[str, float] = field(default_factory=dict)


@dataclass
class SchedulingInstance:
    vehicles: tuple[SchedVehicle, ...]
    conflicts: dict[int, frozenset]  # k -> set of frozenset movement pairs
    gaps: SafetyGaps = field(default_factory=SafetyGaps)
    scope: int | None = None  # None = whole network
    lane_chains: dict | None = None  # (k, lane) -> vids, leader first
    history: dict[int, AreaHistory] = field(default_factory=dict)
    fixed_prefix: dict[int, tuple] = field(default_factory=dict)
    w1: float = 1.0
    w2: float = 0.5

    def __post_init__(self):
        self.vehicles = tuple(self.vehicles)
        self._by_id = {v.vid: v for v in self.vehicles}
        if len(self._by_id) != len(self.vehicles):
            raise ValueError("duplicate vehicle id")
        for v in self.vehicles:
            if not v.crossings:
                raise ValueError(f"vehicle {v.vid} has no crossing")
            if v.zone not in (AREA, SEGMENT):
                raise ValueError(f"vehicle {v.vid} has unknown zone tag {v.zone!r}")
            if self.scope is not None and (len(v.crossings) != 1 or v.crossings[0].k != self.scope):
                raise ValueError(f"vehicle {v.vid} does not belong to sub-problem {self.scope}")
        if self.lane_chains is None:
            self.lane_chains = default_chains(self.vehicles)
        self.lane_chains = {key: tuple(c) for key, c in self.lane_chains.items()}
        placed = set()
        for (k, lane), chain in self.lane_chains.items():
            for vid in chain:
                c = self._by_id[vid].crossings[0]
                if (c.k, c.lane) != (k, lane):
                    raise ValueError(f"vehicle {vid} listed in the wrong lane chain {(k, lane)}")
                if vid in placed:
                    raise ValueError(f"vehicle {vid} appears in two lane chains")
                placed.add(vid)
        if placed != set(self._by_id):
            raise ValueError("every vehicle must appear in exactly one lane chain")

    def vehicle(self, vid) -> SchedVehicle:
        return self._by_id[vid]

    @property
    def intersections(self) -> list[int]:
        return sorted({c.k for v in self.vehicles for c in v.crossings})

    @property
    def Q1(self) -> int:
        return sum(v.zone == AREA for v in self.vehicles)

    @property
    def Q2(self) -> int:
        return sum(v.zone == SEGMENT for v in self.vehicles)

    def weight(self, v: SchedVehicle) -> float:
        return self.w1 if v.zone == AREA else self.w2

    def conflicting(self, k: int, a: str, b: str) -> bool:
        return frozenset((a, b)) in self.conflicts.get(k, frozenset())


def default_chains(vehicles: Iterable[SchedVehicle]) -> dict:
    """Lane chains sorted by first-crossing t_min, then vehicle id."""
    chains: dict = {}
    for v in vehicles:
        c = v.crossings[0]
        chains.setdefault((c.k, c.lane), []).append(v)
    return {key: tuple(v.vid for v in sorted(vs, key=lambda v: (v.crossings[0].t_min, v.vid)))
            for key, vs in chains.items()}


PassingOrder = dict  # k -> tuple of vehicle ids


@dataclass
class Assignment:
    times: dict  # (vid, k) -> t_assign
    lower: dict  # (vid, k) -> effective t_min used for the delay
    zones: dict  # vid -> zone tag

    def delay(self, vid, k) -> float:
        return self.times[(vid, k)] - self.lower[(vid, k)]

    def vehicle_delay(self, vid) -> float:
        return sum(t - self.lower[key] for key, t in self.times.items() if key[0] == vid)

    @property
    def in_area(self) -> dict:
        return {key: t for key, t in self.times.items() if self.zones[key[0]] == AREA}

    @property
    def segment(self) -> dict:
        return {key: t for key, t in self.times.items() if self.zones[key[0]] == SEGMENT}


# -- forward pass -----------------------------------------------------------

class _Frontier:
    """Mutable bookkeeping shared by forward_pass and branch-and-bound."""

    def __init__(self, inst: SchedulingInstance):
        self.inst = inst
        self.lane_last = {}
        self.mov_last = {}
        for k, h in inst.history.items():
            for lane, t in h.lane_last.items():
                self.lane_last[(k, lane)] = t
            for m, t in h.mov_last.items():
                self.mov_last.setdefault(k, {})[m] = t
        # dynamic lane queues: physical chains plus vehicles handed over from upstream
        self.queues = {key: list(chain) for key, chain in inst.lane_chains.items()}
        self.qpos = {key: 0 for key in self.queues}
        self.next_idx = {v.vid: 0 for v in inst.vehicles}
        self.prev_time = {}
        self.conf = {k: {} for k in inst.intersections}
        for k, pairs in inst.conflicts.items():
            d = self.conf.setdefault(k, {})
            for p in pairs:
                a, b = tuple(p)
                d.setdefault(a, []).append(b)
                d.setdefault(b, []).append(a)

    def ready(self, vid, k) -> bool:
        v = self.inst.vehicle(vid)
        i = self.next_idx[vid]
        if i >= len(v.crossings) or v.crossings[i].k != k:
            return False
        key = (k, v.crossings[i].lane)
        q = self.queues.get(key)
        return q is not None and self.qpos[key] < len(q) and q[self.qpos[key]] == vid

    def lower(self, vid) -> float:
        v = self.inst.vehicle(vid)
        i = self.next_idx[vid]
        c = v.crossings[i]
        if i == 0:
            return c.t_min
        return self.prev_time[vid] + v.crossings[i - 1].hop

    def earliest(self, vid) -> tuple[float, float]:
        v = self.inst.vehicle(vid)
        c = v.crossings[self.next_idx[vid]]
        lb = self.lower(vid)
        g = self.inst.gaps
        t = lb
        ll = self.lane_last.get((c.k, c.lane))
        if ll is not None and ll + g.dt1 > t:
            t = ll + g.dt1
        ml = self.mov_last.get(c.k)
        if ml:
            for m in self.conf.get(c.k, {}).get(c.movement, ()):
                x = ml.get(m)
                if x is not None and x + g.dt2 > t:
                    t = x + g.dt2
        return t, lb

    def place(self, vid, t):
        """Commit the next crossing of vid at time t; returns an undo record."""
        v = self.inst.vehicle(vid)
        i = self.next_idx[vid]
        c = v.crossings[i]
        key = (c.k, c.lane)
        ml = self.mov_last.setdefault(c.k, {})
        undo = (vid, i, self.lane_last.get(key), ml.get(c.movement), self.prev_time.get(vid), None)
        self.lane_last[key] = max(t, self.lane_last.get(key, -math.inf))
        ml[c.movement] = max(t, ml.get(c.movement, -math.inf))
        self.qpos[key] += 1
        self.prev_time[vid] = t
        self.next_idx[vid] = i + 1
        if i + 1 < len(v.crossings):
            n = v.crossings[i + 1]
            nkey = (n.k, n.lane)
            self.queues.setdefault(nkey, []).append(vid)
            self.qpos.setdefault(nkey, 0)
            undo = undo[:5] + (nkey,)
        return undo

    def unplace(self, undo):
        vid, i, old_lane, old_mov, old_prev, nkey = undo
        v = self.inst.vehicle(vid)
        c = v.crossings[i]
        key = (c.k, c.lane)
        if old_lane is None:
            self.lane_last.pop(key, None)
        else:
            self.lane_last[key] = old_lane
        if old_mov is None:
            self.mov_last[c.k].pop(c.movement, None)
        else:
            self.mov_last[c.k][c.movement] = old_mov
        self.qpos[key] -= 1
        if old_prev is None:
            self.prev_time.pop(vid, None)
        else:
            self.prev_time[vid] = old_prev
        self.next_idx[vid] = i
        if nkey is not None:
            self.queues[nkey].pop()


def forward_pass(inst: SchedulingInstance, order: PassingOrder) -> Assignment:
    """Earliest feasible entry times for a fixed passing order."""
    need = {}
    for v in inst.vehicles:
        for c in v.crossings:
            need.setdefault(c.k, []).append(v.vid)
    for k, vids in need.items():
        got = list(order.get(k, ()))
        if sorted(got, key=repr) != sorted(vids, key=repr):
            raise InfeasibleOrder(f"order at {k} does not list exactly the vehicles crossing it")
    fr = _Frontier(inst)
    ptr = {k: 0 for k in need}
    seq = {k: tuple(order[k]) for k in need}
    times, lower = {}, {}
    remaining = sum(len(s) for s in seq.values())
    while remaining:
        progressed = False
        for k in sorted(seq):
            while ptr[k] < len(seq[k]) and fr.ready(seq[k][ptr[k]], k):
                vid = seq[k][ptr[k]]
                t, lb = fr.earliest(vid)
                fr.place(vid, t)
                times[(vid, k)] = t
                lower[(vid, k)] = lb
                ptr[k] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            stuck = {k: seq[k][ptr[k]] for k in seq if ptr[k] < len(seq[k])}
            raise InfeasibleOrder(
                f"order cannot be executed (lane precedence violated or causality cycle): {stuck}")
    return Assignment(times, lower, {v.vid: v.zone for v in inst.vehicles})


# -- objectives -------------------------------------------------------------

def delays(a: Assignment) -> dict:
    """Per-vehicle totals J = sum_k (t_assign - t_min)."""
    out = {}
    for (vid, k), t in a.times.items():
        out[vid] = out.get(vid, 0.0) + (t - a.lower[(vid, k)])
    return out


def objective_global(a: Assignment, inst: SchedulingInstance) -> float:
    if not inst.vehicles:
        return 0.0
    total = 0.0
    for v in inst.vehicles:
        for c in v.crossings:
            if (v.vid, c.k) not in a.times:
                raise KeyError(f"missing assignment for vehicle {v.vid} at {c.k}")
            total += a.times[(v.vid, c.k)] - a.lower[(v.vid, c.k)]
    return total / len(inst.vehicles)


def objective_sub(a: Assignment, inst: SchedulingInstance) -> float:
    if not inst.vehicles:
        return 0.0
    total = 0.0
    for v in inst.vehicles:
        w = inst.weight(v)
        for c in v.crossings:
            key = (v.vid, c.k)
            if key not in a.times:
                raise KeyError(f"missing assignment for vehicle {v.vid} at {c.k}")
            total += w * (a.times[key] - a.lower[key])
    return total / len(inst.vehicles)


def objective(a: Assignment, inst: SchedulingInstance) -> float:
    """The objective that matches the instance scope."""
    return objective_global(a, inst) if inst.scope is None else objective_sub(a, inst)


# -- diagnostics ------------------------------------------------------------

def solution_space_sizes(n1: int, n2: int, P: int) -> tuple[int, float]:
    if n1 < 0 or n2 < 0 or P < 1:
        raise ValueError("need n1, n2 >= 0 and P >= 1")
    return 2 ** (n1 + n2), 2.0 ** (n1 / P)


def count_conflicts(inst: SchedulingInstance) -> tuple[int, int]:
    """(n1, n2): conflicts at the pair's shared current area vs elsewhere on their routes."""
    n1 = n2 = 0
    vs = inst.vehicles
    for i in range(len(vs)):
        a = vs[i]
        for b in vs[i + 1:]:
            here = a.crossings[0].k == b.crossings[0].k
            for ca in a.crossings:
                for cb in b.crossings:
                    if ca.k != cb.k or ca.lane == cb.lane:
                        continue
                    if inst.conflicting(ca.k, ca.movement, cb.movement):
                        if here and ca.k == a.crossings[0].k:
                            n1 += 1
                        else:
                            n2 += 1
    return n1, n2


def binaries_from_order(inst: SchedulingInstance, order: PassingOrder) -> dict:
    """b[(u, w, k)] = 1 when u precedes conflicting w at k."""
    b = {}
    for k, seq in order.items():
        for i, u in enumerate(seq):
            cu = inst.vehicle(u).crossing_at(k)
            for w in seq[i + 1:]:
                cw = inst.vehicle(w).crossing_at(k)
                if inst.conflicting(k, cu.movement, cw.movement):
                    b[(u, w, k)] = 1
                    b[(w, u, k)] = 0
    return b


def check_bigm(inst: SchedulingInstance, a: Assignment, b: dict, M: float, tol: float = 1e-9) -> list:
    """Re-check the disjunctive constraints in big-M form; returns violated keys."""
    bad = []
    g = inst.gaps.dt2
    for (u, w, k), buw in b.items():
        tu, tw = a.times[(u, k)], a.times[(w, k)]
        # t_w - t_u >= dt2 - M (1 - b_uw)
        if tw - tu < g - M * (1 - buw) - tol:
            bad.append((u, w, k))
    return bad


def check_assignment(inst: SchedulingInstance, a: Assignment, tol: float = 1e-9) -> list[str]:
    """Constraint violations of an assignment, independent of any order."""
    out = []
    g = inst.gaps
    for v in inst.vehicles:
        prev = None
        for i, c in enumerate(v.crossings):
            t = a.times[(v.vid, c.k)]
            lb = c.t_min if i == 0 else prev + v.crossings[i - 1].hop
            if t < lb - tol:
                out.append(f"vehicle {v.vid} at {c.k} before its minimal time")
            prev = t
    by_k = {}
    for v in inst.vehicles:
        for c in v.crossings:
            by_k.setdefault(c.k, []).append((a.times[(v.vid, c.k)], v.vid, c))
    for k, rows in by_k.items():
        h = inst.history.get(k, AreaHistory())
        for t, vid, c in rows:
            if c.lane in h.lane_last and t < h.lane_last[c.lane] + g.dt1 - tol:
                out.append(f"vehicle {vid} too close to committed lane traffic at {k}")
            for m, tm in h.mov_last.items():
                if inst.conflicting(k, c.movement, m) and t < tm + g.dt2 - tol:
                    out.append(f"vehicle {vid} too close to committed conflicting traffic at {k}")
        for i in range(len(rows)):
            for j in range(i + 1, len(rows)):
                (ti, vi, ci), (tj, vj, cj) = rows[i], rows[j]
                gap = abs(ti - tj)
                if ci.lane == cj.lane and gap < g.dt1 - tol:
                    out.append(f"same-lane {vi},{vj} at {k}: {gap:.6f}")
                elif ci.lane != cj.lane and inst.conflicting(k, ci.movement, cj.movement) and gap < g.dt2 - tol:
                    out.append(f"conflict {vi},{vj} at {k}: {gap:.6f}")
    return out


# -- dump / load ------------------------------------------------------------

def dump_instance(inst: SchedulingInstance) -> str:
    doc = {
        "version": 1,
        "scope": inst.scope,
        "gaps": {"dt1": inst.gaps.dt1, "dt2": inst.gaps.dt2},
        "weights": {"w1": inst.w1, "w2": inst.w2},
        "vehicles": [
            {"id": v.vid, "zone": v.zone,
             "crossings": [[c.k, c.lane, c.movement, c.t_min, c.hop] for c in v.crossings]}
            for v in inst.vehicles
        ],
        "conflicts": {str(k): sorted(sorted(p) for p in pairs) for k, pairs in inst.conflicts.items()},
        "lane_chains": [[k, lane, list(chain)] for (k, lane), chain in sorted(inst.lane_chains.items())],
        "history": {str(k): {"lane_last": dict(h.lane_last), "mov_last": dict(h.mov_last)}
                    for k, h in inst.history.items()},
        "fixed_prefix": {str(k): list(p) for k, p in inst.fixed_prefix.items()},
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def load_instance(text: str) -> SchedulingInstance:
    doc = json.loads(text)
    if doc.get("version") != 1:
        raise ValueError("unsupported instance version")
    vehicles = tuple(
        SchedVehicle(d["id"], tuple(Crossing(int(k), lane, m, float(t), float(h))
                                    for k, lane, m, t, h in d["crossings"]), d["zone"])
        for d in doc["vehicles"])
    return SchedulingInstance(
        vehicles=vehicles,
        conflicts={int(k): frozenset(frozenset(p) for p in pairs) for k, pairs in doc["conflicts"].items()},
        gaps=SafetyGaps(**doc["gaps"]),
        scope=doc["scope"],
        lane_chains={(int(k), lane): tuple(chain) for k, lane, chain in doc["lane_chains"]},
        history={int(k): AreaHistory(h["lane_last"], h["mov_last"]) for k, h in doc["history"].items()},
        fixed_prefix={int(k): tuple(p) for k, p in doc["fixed_prefix"].items()},
        w1=doc["weights"]["w1"], w2=doc["weights"]["w2"],
    )
