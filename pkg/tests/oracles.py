"""Independent reference computations used as test oracles.

None of these call into the code under test except for plain data types.
"""

from __future__ import annotations

import math
from itertools import permutations

import numpy as np

from netcoop.kinematics import KinematicLimits, LongitudinalState


def integrate_arrival(s: LongitudinalState, lim: KinematicLimits, h: float = 1e-3) -> float:
    """Time-optimal arrival by 1 ms stepping: full throttle until v_max, interpolated at the line."""
    d, v, t = s.distance, s.velocity, 0.0
    if d <= 0:
        return 0.0
    while True:
        a = lim.a_max if v < lim.v_max else 0.0
        v_new = min(v + a * h, lim.v_max)
        step = 0.5 * (v + v_new) * h
        if step >= d:
            # linear interpolation inside the last step
            return t + h * d / step
        d -= step
        v = v_new
        t += h


def sample_profile(s: LongitudinalState, phases, h: float = 1e-3):
    """Position and speed every h seconds along a phase list, by sub-stepping."""
    d, v = s.distance, s.velocity
    out = [(0.0, d, v)]
    t = 0.0
    for dur, acc in phases:
        n = max(1, int(math.ceil(dur / h)))
        tau = dur / n
        for _ in range(n):
            d -= v * tau + 0.5 * acc * tau * tau
            v += acc * tau
            t += tau
            out.append((t, d, v))
    return out


def grid_assignment(t_min, lanes, movements, conflicts, order, dt1, dt2, h=1e-3, horizon=60.0):
    """Componentwise-minimal times on a 1 ms grid for a fixed single-area order.

    Each vehicle takes the first grid point (from its t_min upwards) that keeps
    the gaps to every vehicle placed before it.
    """
    times = {}
    for i in order:
        placed = list(times.items())
        steps = int(round(t_min[i] / h))
        while steps * h < t_min[i] + horizon:
            t = steps * h
            ok = True
            for j, tj in placed:
                gap = t - tj
                if lanes[i] == lanes[j] and gap < dt1 - 1e-9:
                    ok = False
                    break
                if lanes[i] != lanes[j] and frozenset((movements[i], movements[j])) in conflicts \
                        and gap < dt2 - 1e-9:
                    ok = False
                    break
            if ok:
                times[i] = t
                break
            steps += 1
    return [times[i] for i in range(len(t_min))]


def lane_orders(inst):
    """Every interleaving of the instance's lane chains (same-lane order kept)."""
    chains = [list(c) for c in inst.lane_chains.values()]

    def rec(pos, acc):
        if len(acc) == len(inst.vehicles):
            yield tuple(acc)
            return
        for ci, ch in enumerate(chains):
            if pos[ci] < len(ch):
                pos[ci] += 1
                acc.append(ch[pos[ci] - 1])
                yield from rec(pos, acc)
                acc.pop()
                pos[ci] -= 1

    yield from rec([0] * len(chains), [])


def evaluate_sequence(inst, seq) -> float:
    """Weighted average delay of a single-area sequence, checked pairwise.

    Every vehicle starts at its minimal time and is pushed back past each
    earlier vehicle it shares a lane with (dt1) or conflicts with (dt2).
    """
    k = inst.scope
    g = inst.gaps
    hist = inst.history.get(k)
    earlier = []  # (time, lane, movement)
    if hist:
        earlier += [(t, lane, None) for lane, t in hist.lane_last.items()]
        earlier += [(t, None, m) for m, t in hist.mov_last.items()]
    total = 0.0
    for vid in seq:
        v = inst.vehicle(vid)
        c = v.crossings[0]
        t = c.t_min
        for tj, lane, m in earlier:
            if lane == c.lane:
                t = max(t, tj + g.dt1)
            elif m is not None and lane != c.lane and inst.conflicting(k, c.movement, m):
                t = max(t, tj + g.dt2)
        earlier.append((t, c.lane, c.movement))
        total += inst.weight(v) * (t - c.t_min)
    return total / len(inst.vehicles)


def enumerate_optimum(inst) -> float:
    """Brute force over all admissible orders of a single-area instance."""
    if not inst.vehicles:
        return 0.0
    return min(evaluate_sequence(inst, seq) for seq in lane_orders(inst))


def brute_permutations(inst) -> float:
    """Literal permutation enumeration, filtering out lane-order violations."""
    pos = {vid: (key, i) for key, ch in inst.lane_chains.items() for i, vid in enumerate(ch)}
    best = math.inf
    for seq in permutations([v.vid for v in inst.vehicles]):
        seen = {}
        ok = True
        for vid in seq:
            key, i = pos[vid]
            if seen.get(key, 0) != i:
                ok = False
                break
            seen[key] = i + 1
        if ok:
            best = min(best, evaluate_sequence(inst, seq))
    return best


def poisson_means(arrivals, n_lanes):
    """Mean inter-arrival per lane from an (time, lane) event list."""
    out = []
    for lane in range(n_lanes):
        ts = np.array(sorted(t for t, l in arrivals if l == lane))
        if len(ts) > 1:
            out.append(np.diff(np.concatenate([[0.0], ts])).mean())
    return out


def integrate_arrival_batch(d, v, lim: KinematicLimits, h: float = 1e-3):
    """Vectorised ``integrate_arrival`` over arrays of distances and speeds."""
    d = np.array(d, dtype=float)
    v = np.array(v, dtype=float)
    out = np.where(d <= 0, 0.0, np.nan)
    t = 0.0
    live = np.isnan(out)
    while live.any():
        v_new = np.minimum(v + lim.a_max * h, lim.v_max)
        step = 0.5 * (v + v_new) * h
        hit = live & (step >= d)
        out[hit] = t + h * d[hit] / step[hit]
        live &= ~hit
        d = d - step
        v = v_new
        t += h
    return out
