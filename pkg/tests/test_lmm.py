import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from harvestsim.lmm import (
    LmmConfig,
    LmmState,
    discharge_current_from_vdiff,
    min_detectable_current,
    step_lmm,
)
from harvestsim.units import EventKind

from oracles import first_order_crossing, first_order_release

DT = 1e-4


def discharge(state: LmmState, v: float, c: float, i: float, duration: float, t0: int = 0):
    """Feed a constant-current discharge; return (events, final voltage)."""
    events = []
    n = round(duration / DT)
    for k in range(n):
        v_new = v - i * DT / c
        events += step_lmm(state, v, v_new, DT, t0 + (k + 1) * 100_000)
        v = v_new
    return events, v


def first_time(events, kind):
    return next((e.timestamp * 1e-9 for e in events if e.kind == kind), None)


def test_t1_slow_edge_legacy_calibration():
    # tau 5 ms with a 12 mV reference: 15 mA from 100 mF gives 15 mV ideal output
    cfg = LmmConfig(tau=5e-3, v_ref=12e-3, v_ref_by_cap={})
    st_ = LmmState(cfg, 3.0, DT)
    events, _ = discharge(st_, 3.0, 0.1, 15e-3, 50e-3)
    t1 = first_time(events, EventKind.LMM_RISE)
    expected = first_order_crossing(15e-3, 12e-3, 5e-3)
    assert expected == pytest.approx(5e-3 * math.log(5))
    assert t1 == pytest.approx(expected, abs=DT)
    assert t1 <= 11e-3


def test_rc_only_response_would_be_too_slow():
    # a plain RC differentiator with tau = R_F*C_1 = 0.1 s
    assert first_order_crossing(15e-3, 12e-3, 0.1) == pytest.approx(0.161, abs=1e-3)


def test_t1_default_calibration_on_c4():
    cfg = LmmConfig()
    st_ = LmmState(cfg, 3.0, DT, "C4")
    events, _ = discharge(st_, 3.0, 0.1, 15e-3, 50e-3)
    t1 = first_time(events, EventKind.LMM_RISE)
    assert t1 == pytest.approx(first_order_crossing(15e-3, 13.5e-3, 4e-3), abs=DT)
    assert t1 <= 11e-3


def test_idle_decays_and_stays_low():
    st_ = LmmState(LmmConfig(), 3.0, DT)
    discharge(st_, 3.0, 15e-3, 5e-3, 30e-3)
    events = []
    for k in range(2000):
        events += step_lmm(st_, 2.99, 2.99, DT)
    assert abs(st_.v_diff) < 1e-9
    assert not st_.comparator_out


def test_fast_edge_rise_and_release():
    cfg = LmmConfig()
    st_ = LmmState(cfg, 3.0, DT, "C4")
    events, v = discharge(st_, 3.0, 0.1, 100e-3, 30e-3)
    rise = first_time(events, EventKind.LMM_RISE)
    assert rise <= 1e-3  # the settling lag is the only delay
    v_end = st_.v_diff
    tail = []
    for k in range(300):
        tail += step_lmm(st_, v, v, DT, round((0.03 + (k + 1) * DT) * 1e9))
    t2 = first_time(tail, EventKind.LMM_FALL) - 0.03
    assert t2 == pytest.approx(first_order_release(v_end, 13.5e-3, 4e-3), abs=DT)
    assert 5e-3 <= t2 <= 10e-3


def test_invert_vdiff():
    assert discharge_current_from_vdiff(-15e-3, 0.1, 0.1) == pytest.approx(15e-3)
    assert discharge_current_from_vdiff(0.0, 0.1, 0.1) == 0.0
    with pytest.raises(ValueError):
        discharge_current_from_vdiff(1e-3, 0.1, 0.0)


def test_round_trip_constant_discharge():
    st_ = LmmState(LmmConfig(), 3.0, DT)
    discharge(st_, 3.0, 68e-3, 12e-3, 60e-3)
    est = discharge_current_from_vdiff(st_.v_diff, 68e-3, LmmConfig().gain)
    assert est == pytest.approx(12e-3, rel=0.12)


def test_min_detectable():
    cfg = LmmConfig()
    i15 = min_detectable_current(15e-3, cfg, "C1")
    assert 2e-3 < i15 < 3e-3
    plain = LmmConfig(v_ref_by_cap={})
    # without a per-capacitor reference the threshold scales with capacitance
    assert min_detectable_current(0.1, plain) / min_detectable_current(15e-3, plain) == pytest.approx(100 / 15)
    assert min_detectable_current(0.1, LmmConfig(v_ref=3e-3 * 0.1 / 15e-3, v_ref_by_cap={})) == pytest.approx(20e-3)
    assert min_detectable_current(0.1, cfg, "C4") <= 15e-3
    assert min_detectable_current(15e-3, LmmConfig(v_ref=1e-9)) == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("current,fires", [(2e-3, False), (3e-3, True), (2.7e-3 * 2 / 3, False)])
def test_thirty_ms_pulse_on_15mF(current, fires):
    st_ = LmmState(LmmConfig(), 3.0, DT, "C1")
    events, _ = discharge(st_, 3.0, 15e-3, current, 30e-3)
    assert (first_time(events, EventKind.LMM_RISE) is not None) == fires


def test_select_cap_resets_reference():
    st_ = LmmState(LmmConfig(), 3.0, DT, "C1")
    st_.select_cap("C4", 2.5)
    assert st_.v_ref == pytest.approx(13.5e-3)
    assert step_lmm(st_, 2.5, 2.5, DT) == []


def test_config_validation():
    with pytest.raises(ValueError):
        LmmConfig(v_ref=0)
    with pytest.raises(ValueError):
        LmmConfig(hysteresis=0.02)
    with pytest.raises(ValueError):
        LmmState(LmmConfig(tau=1e-4), 3.0, 1e-3)


@given(st.lists(st.floats(0, 0.2), min_size=1, max_size=60))
def test_comparator_tracks_threshold(currents):
    cfg = LmmConfig()
    st_ = LmmState(cfg, 3.0, DT)
    v = 3.0
    level = False
    for i in currents:
        for _ in range(20):
            v_new = v - i * DT / 15e-3
            ev = step_lmm(st_, v, v_new, DT)
            v = v_new
            for e in ev:
                assert (e.kind == EventKind.LMM_RISE) != level  # edges alternate
                level = not level
            assert st_.comparator_out == (abs(st_.v_diff) >= cfg.v_ref)
            assert level == st_.comparator_out
