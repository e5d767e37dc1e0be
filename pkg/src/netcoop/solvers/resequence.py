"""Dynamic resequencing baseline: greedy insertion into a committed order."""

from __future__ import annotations

import time

from ..scheduling import SchedulingInstance
from .common import SolveResult, SubEvaluator, carry_then_fifo, finish


def solve_greedy_resequence(inst: SchedulingInstance, previous=()) -> SolveResult:
    """Keep the carried-over order; insert each new vehicle at its best position.

    New vehicles are taken in FIFO order.  Candidate positions lie after the
    fixed prefix and the vehicle's same-lane predecessors and before its
    same-lane successors; ties go to the earliest position.
    """
    start = time.perf_counter()
    if not inst.vehicles:
        return SolveResult({}, 0.0, "dr", solve_time=time.perf_counter() - start)
    ev = SubEvaluator(inst)
    fixed = set(ev.prefix)
    seq = [ev.index[v] for v in previous if v in ev.index and ev.index[v] not in fixed]
    seen = set(seq) | fixed
    new = sorted((i for i in range(ev.n) if i not in seen), key=lambda i: ev.key[i])
    # carried-over vehicles must already respect lane order
    pos_in_chain = {}
    for ch in ev.chains:
        for r, i in enumerate(ch):
            pos_in_chain[i] = r
    for ci, ch in enumerate(ev.chains):
        members = [i for i in seq if ev.chain_of[i] == ci]
        if members != sorted(members, key=pos_in_chain.get):
            raise ValueError("carried-over order contradicts lane order")
    for i in new:
        ci = ev.chain_of[i]
        lo, hi = 0, len(seq)
        for p, j in enumerate(seq):
            if ev.chain_of[j] == ci:
                if pos_in_chain[j] < pos_in_chain[i]:
                    lo = p + 1
                elif hi == len(seq) and pos_in_chain[j] > pos_in_chain[i]:
                    hi = p
        best_p, best_v = lo, None
        for p in range(lo, hi + 1):
            cand = ev.prefix + seq[:p] + [i] + seq[p:]
            val = ev.evaluate(cand)
            if best_v is None or val < best_v:
                best_p, best_v = p, val
        seq.insert(best_p, i)
    return finish(inst, ev.order(ev.prefix + seq), "dr", start)


def append_fifo(inst: SchedulingInstance, previous=()) -> SolveResult:
    """First-come-first-served: earlier commitments stay, newcomers queue behind by t_min."""
    start = time.perf_counter()
    if not inst.vehicles:
        return SolveResult({}, 0.0, "fifo", solve_time=time.perf_counter() - start)
    ev = SubEvaluator(inst)
    return finish(inst, ev.order(carry_then_fifo(ev, previous)), "fifo", start)
