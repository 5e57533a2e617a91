import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sizerl.schedule import FixedSchedule, Schedule, ScheduleConfig, fixed_mode


@pytest.fixture()
def sched():
    return Schedule(ScheduleConfig())


def test_alpha_anchors(sched):
    assert sched.alpha(0) == 0.05
    assert sched.alpha(7500) == pytest.approx(0.5, abs=1e-12)
    assert sched.alpha(3000) == pytest.approx(0.23, abs=1e-12)
    assert sched.alpha(15000) == pytest.approx(0.95, abs=1e-12)
    assert sched.alpha(30000) == 0.95
    assert sched.alpha(10**6) == 0.95


def test_ta_anchors(sched):
    assert sched.t_a(0) == 15
    assert sched.t_a(3000) == 16
    assert sched.t_a(7500) == 18  # 17.5 rounds half away from zero
    assert sched.t_a(15000) == 20
    assert sched.t_a(10**6) == 20


def test_r_anchors(sched):
    assert sched.r(0) == 1
    assert sched.r(3000) == 2  # 2.2
    assert sched.r(7500) == 4
    assert sched.r(15000) == 7
    assert sched.r(10**6) == 7


def test_invalid_scale():
    with pytest.raises(ValueError):
        ScheduleConfig(scale=0)


@given(st.integers(0, 10**7), st.integers(0, 10**7))
@settings(max_examples=100, deadline=None)
def test_monotone_nondecreasing(t1, t2):
    s = Schedule(ScheduleConfig())
    lo, hi = min(t1, t2), max(t1, t2)
    assert s.alpha(lo) <= s.alpha(hi)
    assert s.t_a(lo) <= s.t_a(hi)
    assert s.r(lo) <= s.r(hi)


@given(st.integers(0, 10**9))
@settings(max_examples=100, deadline=None)
def test_ranges_always_clamped(t):
    s = Schedule(ScheduleConfig())
    assert 0.05 <= s.alpha(t) <= 0.95
    assert 15 <= s.t_a(t) <= 20
    assert 1 <= s.r(t) <= 7


def test_decreasing_schedule_clamps_correctly():
    s = Schedule(ScheduleConfig(alpha_i=0.9, alpha_f=0.1))
    assert s.alpha(0) == 0.9
    assert 0.1 <= s.alpha(7500) <= 0.9
    assert s.alpha(10**6) == pytest.approx(0.1)


def test_fixed_mode_constants():
    f = fixed_mode()
    for t in (0, 123, 15000, 10**6):
        assert f.alpha(t) == 0.05
        assert f.r(t) == 10
        assert f.t_a(t) == 20


def test_fixed_schedule_custom():
    f = FixedSchedule(alpha=1.0, t_a=3, r=2)
    assert f.alpha(999) == 1.0 and f.t_a(0) == 3 and f.r(5) == 2
