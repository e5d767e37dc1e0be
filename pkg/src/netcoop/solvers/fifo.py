"""First-in-first-out sequencing."""

from __future__ import annotations

import time

from ..scheduling import PassingOrder, SchedulingInstance, _Frontier
from .common import SolveResult, SubEvaluator, finish


def fifo_sub(ev: SubEvaluator) -> list[int]:
    _, suffix = ev.complete(ev.root)
    return ev.prefix + suffix


def fifo_global(inst: SchedulingInstance, forced: PassingOrder | None = None) -> PassingOrder:
    """Serve ready crossings by earliest possible arrival, ties by (lane, id).

    ``forced`` gives per-intersection sequences whose relative order is kept;
    vehicles outside them interleave freely by earliest arrival.
    """
    fr = _Frontier(inst)
    pending = {k: list(s) for k, s in (forced or {}).items()}
    members = {k: set(s) for k, s in pending.items()}
    order: dict = {}
    for k, prefix in sorted(inst.fixed_prefix.items()):
        for vid in prefix:
            t, _ = fr.earliest(vid)
            fr.place(vid, t)
            order.setdefault(k, []).append(vid)
    left = sum(len(v.crossings) for v in inst.vehicles) - sum(len(p) for p in order.values())
    while left:
        best = _pick(fr, pending, members, strict=True) or _pick(fr, pending, members, strict=False)
        lb, lane, k, vid = best
        if vid in members.get(k, ()):
            pending[k].remove(vid)
        t, _ = fr.earliest(vid)
        fr.place(vid, t)
        order.setdefault(k, []).append(vid)
        left -= 1
    return {k: tuple(v) for k, v in order.items()}


def _pick(fr, pending, members, strict):
    # strict honours the forced sequences; the fallback lets a lane leader cut in
    best = None
    for (k, lane), q in fr.queues.items():
        p = fr.qpos[(k, lane)]
        if p < len(q):
            vid = q[p]
            if strict and vid in members.get(k, ()) and pending[k][0] != vid:
                continue
            cand = (fr.lower(vid), lane, k, vid)
            if best is None or cand < best:
                best = cand
    return best


def solve_fifo(inst: SchedulingInstance) -> SolveResult:
    start = time.perf_counter()
    if not inst.vehicles:
        return SolveResult({}, 0.0, "fifo")
    if inst.scope is not None:
        ev = SubEvaluator(inst)
        return finish(inst, ev.order(fifo_sub(ev)), "fifo", start)
    return finish(inst, fifo_global(inst), "fifo", start)
