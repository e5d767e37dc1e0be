"""Branch-and-bound over passing orders.

Only time-sorted event sequences are enumerated: every optimal assignment
can be replayed with its crossings sorted by (time, intersection, id) and
the replay reproduces the same binaries, so nothing optimal is lost.  The
lower bound chains same-lane headways and the known conflicts with
already-placed traffic.
"""

from __future__ import annotations

import math
import time

from ..scheduling import SchedulingInstance, _Frontier
from .common import SolveResult, SolverBudget, finish
from .fifo import solve_fifo

_EPS = 1e-12


class _Stop(Exception):
    pass


def solve_exact(inst: SchedulingInstance, budget: SolverBudget | None = None) -> SolveResult:
    budget = budget or SolverBudget(time_limit=None, iterations=5_000_000)
    start = time.perf_counter()
    deadline = budget.deadline(start)
    base = solve_fifo(inst)
    if not inst.vehicles:
        return SolveResult({}, 0.0, "exact", solve_time=time.perf_counter() - start)

    fr = _Frontier(inst)
    vs = {v.vid: v for v in inst.vehicles}
    n = len(vs)
    scale = 1.0 if inst.scope is None else None
    weight = {vid: (1.0 if scale else inst.weight(v)) for vid, v in vs.items()}
    free = {vid: v.free_final for vid, v in vs.items()}
    dt1 = inst.gaps.dt1

    seq: dict = {}
    acc = 0.0
    for k, prefix in sorted(inst.fixed_prefix.items()):
        for vid in prefix:
            if not fr.ready(vid, k):
                raise ValueError(f"fixed prefix at {k} is inconsistent with lane order")
            t, _ = fr.earliest(vid)
            fr.place(vid, t)
            seq.setdefault(k, []).append(vid)
            if fr.next_idx[vid] == len(vs[vid].crossings):
                acc += weight[vid] * (t - free[vid])
    events_left = sum(len(v.crossings) for v in vs.values()) - sum(len(p) for p in seq.values())

    best = {"value": base.objective, "order": base.order}
    stats = {"nodes": 0, "complete": True}
    curve = [(0, base.objective)]

    def bound(acc, t_last):
        total = acc
        for (k, lane), q in fr.queues.items():
            p = fr.qpos[(k, lane)]
            prev_x = -math.inf
            for vid in q[p:]:
                x, _ = fr.earliest(vid)
                if x < t_last:
                    x = t_last
                if prev_x + dt1 > x:
                    x = prev_x + dt1
                prev_x = x
                v = vs[vid]
                for c in v.crossings[fr.next_idx[vid]:-1]:
                    x += c.hop
                total += weight[vid] * (x - free[vid])
        return total / n

    def dfs(acc, t_last, key_last, left):
        stats["nodes"] += 1
        if budget.iterations is not None and stats["nodes"] > budget.iterations:
            raise _Stop
        if stats["nodes"] % 512 == 0 and time.perf_counter() > deadline:
            raise _Stop
        if left == 0:
            val = acc / n
            if val < best["value"] - _EPS:
                best["value"] = val
                best["order"] = {k: tuple(s) for k, s in seq.items()}
                curve.append((stats["nodes"], val))
            return
        if bound(acc, t_last) > best["value"] - _EPS:
            return
        cands = []
        for (k, lane), q in fr.queues.items():
            p = fr.qpos[(k, lane)]
            if p < len(q):
                vid = q[p]
                t, _ = fr.earliest(vid)
                key = (k, vid)
                if (t, key) < (t_last, key_last):
                    continue
                cands.append((t, key, vid, k))
        cands.sort()
        for t, key, vid, k in cands:
            undo = fr.place(vid, t)
            seq.setdefault(k, []).append(vid)
            done = fr.next_idx[vid] == len(vs[vid].crossings)
            dfs(acc + (weight[vid] * (t - free[vid]) if done else 0.0), t, key, left - 1)
            seq[k].pop()
            fr.unplace(undo)

    try:
        dfs(acc, -math.inf, (-math.inf, -math.inf), events_left)
    except _Stop:
        stats["complete"] = False
    res = finish(inst, best["order"], "exact", start, iterations=stats["nodes"],
                 complete=stats["complete"], curve=curve)
    if res.objective > base.objective:
        # guard against rounding between the search accumulator and the reporting objective
        res = finish(inst, base.order, "exact", start, iterations=stats["nodes"],
                     complete=stats["complete"], curve=curve)
    return res
