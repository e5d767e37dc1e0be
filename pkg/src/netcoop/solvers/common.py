"""Shared solver plumbing: budgets, results and a fast sub-problem evaluator."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from ..scheduling import (
    PassingOrder, SchedulingInstance, forward_pass, objective,
)


@dataclass(frozen=True)
class SolverBudget:
    time_limit: float | None = 0.1  # seconds of wall clock
    iterations: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.time_limit is None and self.iterations is None:
            raise ValueError("a solver budget needs a time or an iteration limit")
        if (self.time_limit is not None and self.time_limit < 0) or \
           (self.iterations is not None and self.iterations < 0):
            raise ValueError("budget limits must be non-negative")

    @property
    def zero(self) -> bool:
        return self.time_limit == 0 or self.iterations == 0

    def deadline(self, start: float) -> float:
        return math.inf if self.time_limit is None else start + self.time_limit


@dataclass
class SolveResult:
    order: PassingOrder
    objective: float
    solver: str
    iterations: int = 0
    complete: bool = True
    fallback: bool = False
    solve_time: float = 0.0
    curve: list = field(default_factory=list)  # (iteration, incumbent objective)


def finish(inst: SchedulingInstance, order: PassingOrder, solver: str, start: float, **kw) -> SolveResult:
    a = forward_pass(inst, order)
    return SolveResult(order, objective(a, inst), solver, solve_time=time.perf_counter() - start, **kw)


def fifo_key(inst: SchedulingInstance, vid):
    c = inst.vehicle(vid).crossings[0]
    return (c.t_min, c.lane, vid)


class SubEvaluator:
    """Index-based forward pass for single-intersection instances.

    State is (lane_last, mov_last, acc, pos) where ``pos`` holds the next
    index into each lane chain and ``acc`` the weighted delay so far.
    """

    def __init__(self, inst: SchedulingInstance):
        if inst.scope is None:
            raise ValueError("SubEvaluator needs a single-intersection instance")
        self.inst = inst
        k = inst.scope
        g = inst.gaps
        self.dt1, self.dt2 = g.dt1, g.dt2
        self.vids = [v.vid for v in inst.vehicles]
        self.index = {vid: i for i, vid in enumerate(self.vids)}
        hist = inst.history.get(k)
        lanes = sorted({v.crossings[0].lane for v in inst.vehicles} | set(hist.lane_last if hist else ()))
        movs = sorted({v.crossings[0].movement for v in inst.vehicles} | set(hist.mov_last if hist else ()))
        li = {l: i for i, l in enumerate(lanes)}
        mi = {m: i for i, m in enumerate(movs)}
        self.tmin = [v.crossings[0].t_min for v in inst.vehicles]
        self.lane = [li[v.crossings[0].lane] for v in inst.vehicles]
        self.mov = [mi[v.crossings[0].movement] for v in inst.vehicles]
        self.w = [inst.weight(v) for v in inst.vehicles]
        self.conf = [[mi[b] for b in movs if inst.conflicting(k, a, b)] for a in movs]
        self.lane_last0 = [-math.inf] * len(lanes)
        self.mov_last0 = [-math.inf] * len(movs)
        if hist:
            for l, t in hist.lane_last.items():
                self.lane_last0[li[l]] = t
            for m, t in hist.mov_last.items():
                self.mov_last0[mi[m]] = t
        keys = sorted(inst.lane_chains)
        self.chains = [[self.index[vid] for vid in inst.lane_chains[key]] for key in keys]
        self.chain_of = {}
        for ci, ch in enumerate(self.chains):
            for i in ch:
                self.chain_of[i] = ci
        self.key = [(self.tmin[i], inst.vehicle(self.vids[i]).crossings[0].lane, self.vids[i])
                    for i in range(len(self.vids))]
        self.n = len(self.vids)
        prefix = [self.index[vid] for vid in inst.fixed_prefix.get(k, ())]
        st = (list(self.lane_last0), list(self.mov_last0), 0.0, [0] * len(self.chains))
        for i in prefix:
            ci = self.chain_of[i]
            if self.chains[ci][st[3][ci]] != i:
                raise ValueError(f"fixed prefix is inconsistent with lane order at vehicle {self.vids[i]}")
            st = self.push(st, i)
        self.prefix = prefix
        self.root = st

    def push(self, st, i, times=None):
        lane_last, mov_last, acc, pos = st
        lane_last, mov_last, pos = list(lane_last), list(mov_last), list(pos)
        acc = self._place(lane_last, mov_last, acc, i, times)
        pos[self.chain_of[i]] += 1
        return lane_last, mov_last, acc, pos

    def _place(self, lane_last, mov_last, acc, i, times=None):
        t = self.tmin[i]
        x = lane_last[self.lane[i]] + self.dt1
        if x > t:
            t = x
        for m in self.conf[self.mov[i]]:
            x = mov_last[m] + self.dt2
            if x > t:
                t = x
        if t > lane_last[self.lane[i]]:
            lane_last[self.lane[i]] = t
        if t > mov_last[self.mov[i]]:
            mov_last[self.mov[i]] = t
        if times is not None:
            times[i] = t
        return acc + self.w[i] * (t - self.tmin[i])

    def heads(self, pos) -> list[int]:
        return [ch[p] for ch, p in zip(self.chains, pos) if p < len(ch)]

    def complete(self, st, policy=None):
        """Finish from state ``st`` by FIFO merge; returns (objective, suffix)."""
        lane_last, mov_last, acc, pos = list(st[0]), list(st[1]), st[2], list(st[3])
        chains, key = self.chains, self.key
        suffix = []
        while True:
            best, bc = None, -1
            for ci, ch in enumerate(chains):
                p = pos[ci]
                if p < len(ch):
                    i = ch[p]
                    if best is None or key[i] < key[best]:
                        best, bc = i, ci
            if best is None:
                break
            acc = self._place(lane_last, mov_last, acc, best)
            pos[bc] += 1
            suffix.append(best)
        return self.value(acc), suffix

    def value(self, acc: float) -> float:
        return acc / self.n if self.n else 0.0

    def evaluate(self, seq) -> float:
        """Objective of a full sequence of vehicle indices (prefix included)."""
        lane_last, mov_last, acc = list(self.lane_last0), list(self.mov_last0), 0.0
        for i in seq:
            acc = self._place(lane_last, mov_last, acc, i)
        return self.value(acc)

    def order(self, seq) -> PassingOrder:
        return {self.inst.scope: tuple(self.vids[i] for i in seq)}


def carry_then_fifo(ev: SubEvaluator, previous) -> list[int]:
    """Previously ordered vehicles keep their relative order; the rest follow by FIFO.

    Lane order always wins, so a carried-over vehicle never jumps its leader.
    """
    rank = {ev.index[v]: r for r, v in enumerate(previous) if v in ev.index}
    seq = list(ev.prefix)
    pos = list(ev.root[3])
    while True:
        heads = [(ch[p], ci) for ci, (ch, p) in enumerate(zip(ev.chains, pos)) if p < len(ch)]
        if not heads:
            return seq
        i, ci = min(heads, key=lambda h: (0, rank[h[0]]) if h[0] in rank else (1, ev.key[h[0]]))
        seq.append(i)
        pos[ci] += 1
