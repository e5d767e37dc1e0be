"""Longitudinal vehicle dynamics.

Distances are measured as distance remaining to the conflict-area entry
(stop line), so forward motion decreases ``distance``.  A speed profile is a
sequence of constant-acceleration phases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EPS_T = 1e-9


class InfeasibleTarget(ValueError):
    """Raised when an arrival time cannot be met by any admissible profile."""

    def __init__(self, message: str, deficit: float = 0.0):
        super().__init__(message)
        self.deficit = deficit


@dataclass(frozen=True)
class KinematicLimits:
    v_max: float = 15.0
    v_min: float = 0.0
    a_max: float = 3.0
    a_min: float = -5.0
    v_c: float = 10.0

    def __post_init__(self):
        if self.v_min < 0 or not (self.v_min <= self.v_c <= self.v_max):
            raise ValueError(f"need 0 <= v_min <= v_c <= v_max, got {self}")
        if not (self.a_min < 0 < self.a_max):
            raise ValueError(f"need a_min < 0 < a_max, got {self}")


@dataclass(frozen=True)
class LongitudinalState:
    distance: float
    velocity: float


@dataclass(frozen=True)
class SpeedProfile:
    phases: tuple[tuple[float, float], ...] = ()

    @property
    def duration(self) -> float:
        return sum(d for d, _ in self.phases)

    def distance(self, v0: float) -> float:
        total, v = 0.0, v0
        for dur, acc in self.phases:
            total += v * dur + 0.5 * acc * dur * dur
            v += acc * dur
        return total

    def final_velocity(self, v0: float) -> float:
        return v0 + sum(d * a for d, a in self.phases)


def _accel_time(v0: float, d: float, a: float) -> float:
    # time to cover d from v0 at constant a > 0
    return (-v0 + math.sqrt(v0 * v0 + 2.0 * a * d)) / a


def minimal_arrival_time(s: LongitudinalState, lim: KinematicLimits) -> float:
    """Time-optimal arrival: accelerate at ``a_max`` up to ``v_max``, then cruise."""
    d, v = s.distance, s.velocity
    if d <= 0.0:
        return 0.0
    if v >= lim.v_max:
        return d / v
    d_acc = (lim.v_max ** 2 - v * v) / (2.0 * lim.a_max)
    if d_acc >= d:
        return _accel_time(v, d, lim.a_max)
    return (lim.v_max - v) / lim.a_max + (d - d_acc) / lim.v_max


def time_optimal_profile(s: LongitudinalState, lim: KinematicLimits) -> SpeedProfile:
    d, v = s.distance, s.velocity
    if d <= 0.0:
        return SpeedProfile(())
    if v >= lim.v_max:
        return SpeedProfile(((d / v, 0.0),))
    d_acc = (lim.v_max ** 2 - v * v) / (2.0 * lim.a_max)
    if d_acc >= d:
        return SpeedProfile(((_accel_time(v, d, lim.a_max), lim.a_max),))
    return SpeedProfile((((lim.v_max - v) / lim.a_max, lim.a_max), ((d - d_acc) / lim.v_max, 0.0)))


def _hold_profile(d: float, v0: float, v_h: float, lim: KinematicLimits):
    """Change speed to v_h, hold, then accelerate so v_max is reached at the line.

    Returns (arrival time, phases) or None when v_h cannot be reached before
    the line.
    """
    if v_h >= v0:
        a1 = lim.a_max
        t1 = (v_h - v0) / a1
    else:
        a1 = lim.a_min
        t1 = (v_h - v0) / a1
    d1 = v0 * t1 + 0.5 * a1 * t1 * t1
    if d1 > d + 1e-12:
        return None
    rem = max(d - d1, 0.0)
    d3 = (lim.v_max ** 2 - v_h * v_h) / (2.0 * lim.a_max)
    if d3 <= rem:
        hold = rem - d3
        if hold > 0.0 and v_h <= 0.0:
            return math.inf, None
        t2 = hold / v_h if hold > 0.0 else 0.0
        t3 = (lim.v_max - v_h) / lim.a_max
    else:
        t2 = 0.0
        t3 = _accel_time(v_h, rem, lim.a_max) if rem > 0.0 else 0.0
    phases = tuple(p for p in ((t1, a1), (t2, 0.0), (t3, lim.a_max)) if p[0] > 0.0)
    return t1 + t2 + t3, phases


def _stop_profile(d: float, v0: float, lim: KinematicLimits):
    """Cruise, brake to a standstill, then leave from rest at full acceleration.

    The stop point sits where a standing start still reaches v_max at the line
    (or as close to that as the braking distance allows).  Returns
    (arrival time without waiting, phases before the wait, phases after) or
    None if the vehicle cannot stop before the line.
    """
    brake = v0 * v0 / (2.0 * -lim.a_min)
    if brake > d + 1e-12:
        return None
    launch = min(lim.v_max ** 2 / (2.0 * lim.a_max), d - brake)
    cruise = d - brake - launch
    before = []
    t = 0.0
    if cruise > 0.0:
        if v0 <= 0.0:
            # standing still far from the line: launch from here instead
            launch, cruise = d, 0.0
        else:
            before.append((cruise / v0, 0.0))
            t += cruise / v0
    if v0 > 0.0:
        before.append((v0 / -lim.a_min, lim.a_min))
        t += v0 / -lim.a_min
    after = time_optimal_profile(LongitudinalState(launch, 0.0), lim).phases
    t += sum(p[0] for p in after)
    return t, tuple(before), after


def synthesize_profile(
    s: LongitudinalState,
    t_target: float,
    lim: KinematicLimits,
    hold_floor: float = 2.0,
) -> SpeedProfile:
    """Build a profile reaching distance 0 exactly ``t_target`` seconds from now.

    Hold speeds below ``hold_floor`` are avoided when a full stop with a timed
    departure can absorb the slack instead.
    """
    d, v0 = s.distance, s.velocity
    t_min = minimal_arrival_time(s, lim)
    if t_target < t_min - EPS_T:
        raise InfeasibleTarget(
            f"target {t_target:.6f}s is {t_min - t_target:.6f}s earlier than the minimal arrival",
            deficit=t_min - t_target,
        )
    if t_target <= t_min + EPS_T or d <= 0.0:
        return time_optimal_profile(s, lim)

    v_hi = min(lim.v_max, math.sqrt(v0 * v0 + 2.0 * lim.a_max * d))
    v_reach = math.sqrt(max(0.0, v0 * v0 + 2.0 * lim.a_min * d))
    v_lo = max(lim.v_min, v_reach)
    v_sw = min(max(hold_floor, v_lo), v_hi)

    def arrival(v_h):
        r = _hold_profile(d, v0, v_h, lim)
        return math.inf if r is None else r[0]

    if t_target <= arrival(v_sw):
        return _bisect_hold(d, v0, t_target, v_sw, v_hi, lim)
    if lim.v_min <= 0.0:
        stop = _stop_profile(d, v0, lim)
        if stop is not None and stop[0] <= t_target:
            t0, before, after = stop
            wait = t_target - t0
            phases = before + (((wait, 0.0),) if wait > 0.0 else ()) + after
            return SpeedProfile(phases)
    if v_lo < v_sw and t_target <= arrival(v_lo):
        return _bisect_hold(d, v0, t_target, v_lo, v_sw, lim)
    raise InfeasibleTarget(
        f"target {t_target:.6f}s is later than any admissible arrival", deficit=0.0
    )


def _bisect_hold(d, v0, t_target, lo, hi, lim) -> SpeedProfile:
    # arrival time decreases as the hold speed rises
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        r = _hold_profile(d, v0, mid, lim)
        t = math.inf if r is None else r[0]
        if t > t_target:
            lo = mid
        else:
            hi = mid
    r = _hold_profile(d, v0, hi, lim)
    if r is None or r[1] is None:
        r = _hold_profile(d, v0, lo, lim)
    t, phases = r
    phases = list(phases)
    slack = t_target - t
    # absorb the bisection residual in the hold phase
    if slack != 0.0:
        for i, (dur, acc) in enumerate(phases):
            if acc == 0.0:
                phases[i] = (max(dur + slack, 0.0), 0.0)
                break
    return SpeedProfile(tuple(phases))


def integrate(
    s: LongitudinalState,
    profile: SpeedProfile,
    dt: float,
    lim: KinematicLimits | None = None,
) -> LongitudinalState:
    """Advance ``s`` by ``dt`` seconds along ``profile``.

    Velocity saturates at the limits (the phase continues at the bound).  Time
    beyond the end of the profile is not simulated.
    """
    d, v = s.distance, s.velocity
    left = dt
    v_hi = lim.v_max if lim else math.inf
    v_lo = lim.v_min if lim else 0.0
    for dur, acc in profile.phases:
        if left <= 0.0:
            break
        tau = min(dur, left)
        left -= tau
        d, v = _advance(d, v, acc, tau, v_lo, v_hi)
    return LongitudinalState(d, v)


def _advance(d, v, acc, tau, v_lo, v_hi):
    if acc > 0.0 and v + acc * tau > v_hi:
        t_sat = max((v_hi - v) / acc, 0.0)
        d -= v * t_sat + 0.5 * acc * t_sat * t_sat + v_hi * (tau - t_sat)
        return d, v_hi
    if acc < 0.0 and v + acc * tau < v_lo:
        t_sat = max((v_lo - v) / acc, 0.0)
        d -= v * t_sat + 0.5 * acc * t_sat * t_sat + v_lo * (tau - t_sat)
        return d, v_lo
    return d - (v * tau + 0.5 * acc * tau * tau), v + acc * tau


def uncontrolled_arrival_time(s: LongitudinalState, lim: KinematicLimits, l_c: float) -> float:
    """Earliest arrival when the vehicle drifts toward v_c until it is within l_c.

    Outside the intersection area a vehicle is not under control and tends to
    the cruise speed; only the last ``l_c`` metres can be driven time-optimally.
    """
    d, v = s.distance, s.velocity
    if d <= l_c:
        return minimal_arrival_time(s, lim)
    if lim.v_c <= 0.0:
        raise ValueError("uncontrolled motion needs v_c > 0")
    free = d - l_c
    if v == lim.v_c:
        return free / v + minimal_arrival_time(LongitudinalState(l_c, v), lim)
    a = lim.a_max if v < lim.v_c else lim.a_min
    t1 = (lim.v_c - v) / a
    d1 = 0.5 * (v + lim.v_c) * t1
    if d1 >= free:
        # still converging when the area starts
        disc = max(v * v + 2.0 * a * free, 0.0)
        v_end = math.sqrt(disc)
        t = (v_end - v) / a
        return t + minimal_arrival_time(LongitudinalState(l_c, v_end), lim)
    t2 = (free - d1) / lim.v_c
    return t1 + t2 + minimal_arrival_time(LongitudinalState(l_c, lim.v_c), lim)


def cruise_accel(v: float, lim: KinematicLimits) -> float:
    """Acceleration an uncontrolled vehicle applies to settle at v_c."""
    if v < lim.v_c:
        return lim.a_max
    if v > lim.v_c:
        return lim.a_min
    return 0.0


def can_stop(s: LongitudinalState, lim: KinematicLimits) -> bool:
    return lim.v_min <= 0.0 and s.velocity * s.velocity / (2.0 * -lim.a_min) <= s.distance + 1e-9


def latest_arrival_time(s: LongitudinalState, lim: KinematicLimits) -> float:
    """Latest arrival any admissible profile can realise (inf if it can stop and wait)."""
    d, v0 = s.distance, s.velocity
    if d <= 0.0:
        return 0.0
    if can_stop(s, lim):
        return math.inf
    v_reach = math.sqrt(max(0.0, v0 * v0 + 2.0 * lim.a_min * d))
    r = _hold_profile(d, v0, max(lim.v_min, v_reach), lim)
    if r is None:
        # braking hard all the way still leaves speed above v_min
        return (v0 - v_reach) / -lim.a_min
    return r[0]
