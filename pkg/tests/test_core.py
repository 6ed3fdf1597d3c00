from datetime import timedelta

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from mpcdispatch.core import (
    Action,
    BatteryError,
    BatterySpec,
    BatteryState,
    TimeGrid,
    is_feasible,
    step_battery,
)
from conftest import START


def test_charge_from_empty():
    state, delta = step_battery(BatteryState(0), Action.CHARGE, BatterySpec(20, 20), 0.25)
    assert state.stored_kwh == 5.0
    assert delta == 20.0


def test_idle_is_identity():
    state, delta = step_battery(BatteryState(10), Action.IDLE, BatterySpec(20, 20), 0.25)
    assert state.stored_kwh == 10.0
    assert delta == 0.0


def test_charge_with_losses():
    state, delta = step_battery(BatteryState(0), Action.CHARGE, BatterySpec(20, 20, 0.9), 0.25)
    assert state.stored_kwh == 4.5
    assert delta == 20.0


def test_discharge_delivers_power():
    state, delta = step_battery(BatteryState(10), Action.DISCHARGE, BatterySpec(20, 20, 0.9), 0.25)
    assert state.stored_kwh == 5.0
    assert delta == -20.0


def test_infeasible_actions_raise():
    spec = BatterySpec(20, 20)
    with pytest.raises(BatteryError):
        step_battery(BatteryState(0), Action.DISCHARGE, spec, 0.25)
    with pytest.raises(BatteryError):
        step_battery(BatteryState(18), Action.CHARGE, spec, 0.25)
    assert not is_feasible(BatteryState(18), Action.CHARGE, spec, 0.25)
    assert is_feasible(BatteryState(18), Action.IDLE, spec, 0.25)


def test_action_encoding():
    assert [int(a) for a in (Action.DISCHARGE, Action.IDLE, Action.CHARGE)] == [-1, 0, 1]


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(power_kw=0, capacity_kwh=20),
        dict(power_kw=20, capacity_kwh=0),
        dict(power_kw=20, capacity_kwh=20, efficiency=0),
        dict(power_kw=20, capacity_kwh=20, efficiency=1.1),
        dict(power_kw=20, capacity_kwh=20, reserve_kwh=21),
    ],
)
def test_invalid_spec(kwargs):
    with pytest.raises(ValueError):
        BatterySpec(**kwargs)


def test_time_grid_contract():
    grid = TimeGrid(START, timedelta(minutes=15), 96)
    assert grid.steps_per_day == 96
    assert grid.step_hours == 0.25
    assert grid.end - grid.start == timedelta(days=1)
    assert grid.index_of(grid.timestamp(17)) == 17
    with pytest.raises(ValueError):
        TimeGrid(START, timedelta(minutes=7), 10)


specs = st.builds(
    BatterySpec,
    power_kw=st.floats(1, 100),
    capacity_kwh=st.floats(1, 200),
    efficiency=st.floats(0.5, 1.0),
)
durations = st.sampled_from([1 / 60, 0.25, 0.5, 1.0])


@settings(max_examples=200, deadline=None)
@given(
    spec=specs,
    frac=st.floats(0, 1),
    actions=st.lists(st.sampled_from(list(Action)), max_size=40),
    dt=durations,
)
def test_feasible_sequences_stay_in_bounds(spec, frac, actions, dt):
    state = BatteryState(frac * spec.capacity_kwh)
    for a in actions:
        if not is_feasible(state, a, spec, dt):
            continue
        state, _ = step_battery(state, a, spec, dt)
        assert 0 <= state.stored_kwh <= spec.capacity_kwh


@settings(max_examples=200, deadline=None)
@given(spec=specs, frac=st.floats(0, 1), dt=durations)
def test_idle_identity_property(spec, frac, dt):
    state = BatteryState(frac * spec.capacity_kwh)
    assert step_battery(state, Action.IDLE, spec, dt) == (state, 0.0)


@settings(max_examples=200, deadline=None)
@given(power=st.floats(1, 100), capacity=st.floats(1, 200), frac=st.floats(0, 1), dt=durations)
def test_lossless_round_trip_is_exact(power, capacity, frac, dt):
    spec = BatterySpec(power, capacity)
    state = BatteryState(frac * capacity)
    # A charge that overshoots by less than the bound tolerance is clipped,
    # which is not reversible; only unclipped charges must round-trip.
    assume(state.stored_kwh + spec.charge_step_kwh(dt) <= spec.capacity_kwh)
    charged, _ = step_battery(state, Action.CHARGE, spec, dt)
    back, _ = step_battery(charged, Action.DISCHARGE, spec, dt)
    assert back == state
