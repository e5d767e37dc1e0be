import math

import pytest
from hypothesis import given, strategies as st

from netcoop.kinematics import (
    InfeasibleTarget, KinematicLimits, LongitudinalState, SpeedProfile, can_stop, integrate,
    latest_arrival_time, minimal_arrival_time, synthesize_profile, time_optimal_profile,
    uncontrolled_arrival_time,
)
from oracles import integrate_arrival, sample_profile

LIM = KinematicLimits()

states = st.builds(LongitudinalState,
                   distance=st.floats(0.0, 400.0, allow_nan=False),
                   velocity=st.floats(0.0, 15.0, allow_nan=False))
# vehicles still upstream of the line; at the line the crossing has happened
approaching = st.builds(LongitudinalState,
                        distance=st.floats(0.01, 400.0, allow_nan=False),
                        velocity=st.floats(0.0, 15.0, allow_nan=False))


def test_limits_validation():
    with pytest.raises(ValueError):
        KinematicLimits(a_min=1.0)
    with pytest.raises(ValueError):
        KinematicLimits(v_c=20.0)


class TestMinimalArrival:
    def test_at_line(self):
        assert minimal_arrival_time(LongitudinalState(0.0, 7.0), LIM) == 0.0

    def test_accelerate_then_cruise(self):
        # 5/3 s of acceleration covers 20.8333 m, the remaining 179.1667 m at 15 m/s
        s = LongitudinalState(200.0, 10.0)
        assert minimal_arrival_time(s, LIM) == pytest.approx(13.611111111, abs=1e-6)
        assert abs(minimal_arrival_time(s, LIM) - integrate_arrival(s, LIM)) < 2e-3

    def test_already_at_top_speed(self):
        assert minimal_arrival_time(LongitudinalState(10.0, 15.0), LIM) == pytest.approx(2 / 3)

    def test_short_distance_single_phase(self):
        # 5 m from rest: 0.5*3*t^2 = 5
        assert minimal_arrival_time(LongitudinalState(5.0, 0.0), LIM) == pytest.approx(math.sqrt(10 / 3))

    @given(states)
    def test_matches_fine_integration(self, s):
        assert abs(minimal_arrival_time(s, LIM) - integrate_arrival(s, LIM)) < 2e-3

    @given(states, st.floats(0.0, 50.0), st.floats(0.0, 5.0))
    def test_monotone(self, s, extra_d, dv):
        t = minimal_arrival_time(s, LIM)
        farther = LongitudinalState(s.distance + extra_d, s.velocity)
        slower = LongitudinalState(s.distance, max(0.0, s.velocity - dv))
        assert minimal_arrival_time(farther, LIM) >= t - 1e-12
        assert minimal_arrival_time(slower, LIM) >= t - 1e-12


class TestSynthesis:
    def test_boundary_is_time_optimal(self):
        s = LongitudinalState(200.0, 10.0)
        p = synthesize_profile(s, minimal_arrival_time(s, LIM), LIM)
        assert p == time_optimal_profile(s, LIM)
        assert [a for _, a in p.phases] == [LIM.a_max, 0.0]

    def test_three_phase_twenty_seconds(self):
        s = LongitudinalState(200.0, 10.0)
        p = synthesize_profile(s, 20.0, LIM)
        assert p.duration == pytest.approx(20.0, abs=1e-6)
        accs = [a for _, a in p.phases]
        assert accs == [LIM.a_min, 0.0, LIM.a_max]
        end = integrate(s, p, p.duration, LIM)
        assert abs(end.distance) < 1e-4
        assert end.velocity == pytest.approx(LIM.v_max)
        # cross-check the closed-form phases with 1 ms sub-stepping
        t, d, _ = sample_profile(s, p.phases)[-1]
        assert t == pytest.approx(20.0, abs=1e-6) and abs(d) < 1e-3

    def test_stop_and_wait(self):
        s = LongitudinalState(200.0, 10.0)
        p = synthesize_profile(s, 1e6, LIM)
        assert p.duration == pytest.approx(1e6, rel=1e-12)
        waits = [(dur, a) for dur, a in p.phases if a == 0.0 and dur > 1e5]
        assert len(waits) == 1
        # the long phase is spent standing still
        v = s.velocity
        for dur, a in p.phases:
            if (dur, a) == waits[0]:
                assert v == pytest.approx(0.0, abs=1e-9)
            v += a * dur
        assert abs(integrate(s, p, p.duration, LIM).distance) < 1e-4

    def test_infeasible_names_deficit(self):
        s = LongitudinalState(200.0, 10.0)
        with pytest.raises(InfeasibleTarget) as err:
            synthesize_profile(s, 10.0, LIM)
        assert err.value.deficit == pytest.approx(3.611111111, abs=1e-6)

    @given(approaching, st.floats(0.0, 120.0))
    def test_arrives_on_time(self, s, slack):
        t_min = minimal_arrival_time(s, LIM)
        if not can_stop(s, LIM) and slack > 0:
            slack = min(slack, latest_arrival_time(s, LIM) - t_min)
        p = synthesize_profile(s, t_min + slack, LIM)
        assert abs(p.duration - (t_min + slack)) < 1e-6
        end = integrate(s, p, p.duration, LIM)
        assert abs(end.distance) < 1e-4

    @given(approaching, st.floats(0.0, 60.0))
    def test_respects_limits(self, s, slack):
        t_min = minimal_arrival_time(s, LIM)
        if not can_stop(s, LIM):
            slack = min(slack, latest_arrival_time(s, LIM) - t_min)
        p = synthesize_profile(s, t_min + slack, LIM)
        v = s.velocity
        for dur, a in p.phases:
            assert dur >= 0.0
            assert LIM.a_min <= a <= LIM.a_max
            v += a * dur
            # speed is linear inside a phase, so phase ends bound it
            assert LIM.v_min - 1e-9 <= v <= LIM.v_max + 1e-9

    def test_one_ms_samples_within_limits(self):
        s = LongitudinalState(150.0, 12.0)
        for target in (10.5, 14.0, 25.0, 80.0):
            p = synthesize_profile(s, target, LIM)
            for _, _, v in sample_profile(s, p.phases):
                assert LIM.v_min - 1e-9 <= v <= LIM.v_max + 1e-9


class TestIntegrate:
    def test_cruise(self):
        s = integrate(LongitudinalState(100.0, 10.0), SpeedProfile(((5.0, 0.0),)), 1.0, LIM)
        assert s == LongitudinalState(90.0, 10.0)

    def test_saturation(self):
        s0 = LongitudinalState(100.0, 14.5)
        s = integrate(s0, SpeedProfile(((2.0, 3.0),)), 1.0, LIM)
        assert s.velocity == 15.0
        assert s0.distance - s.distance == pytest.approx(14.958333333, abs=1e-8)
        # 1 ms sub-stepping with the clamp gives the same advance
        d, v = 0.0, 14.5
        for _ in range(1000):
            v_new = min(v + 3.0e-3, 15.0)
            d += 0.5 * (v + v_new) * 1e-3
            v = v_new
        assert d == pytest.approx(14.958333333, abs=1e-5)

    def test_empty_profile_is_identity(self):
        s0 = LongitudinalState(50.0, 8.0)
        assert integrate(s0, SpeedProfile(()), 3.0, LIM) == s0


def test_uncontrolled_arrival_cruise_then_area():
    # 100 m at v_c, then the 200 m area from 10 m/s
    s = LongitudinalState(300.0, 10.0)
    expected = 10.0 + minimal_arrival_time(LongitudinalState(200.0, 10.0), LIM)
    assert uncontrolled_arrival_time(s, LIM, 200.0) == pytest.approx(expected)


def test_latest_arrival():
    assert latest_arrival_time(LongitudinalState(200.0, 10.0), LIM) == math.inf
    # 5 m from the line at 15 m/s cannot stop (needs 22.5 m)
    s = LongitudinalState(5.0, 15.0)
    late = latest_arrival_time(s, LIM)
    assert minimal_arrival_time(s, LIM) < late < 1.0
    with pytest.raises(InfeasibleTarget):
        synthesize_profile(s, late + 0.1, LIM)
