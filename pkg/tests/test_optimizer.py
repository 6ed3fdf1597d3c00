import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpcdispatch.core import Action, BatterySpec, BatteryState
from mpcdispatch.optimizer import (
    DispatchProblem,
    HorizonTooLargeError,
    InfeasibleError,
    Objective,
    evaluate_peak,
    evaluate_spot,
    solve_brute_force,
    solve_dp,
)
from conftest import market_series, random_problem

I, D, C = Action.IDLE, Action.DISCHARGE, Action.CHARGE
SMALL = BatterySpec(power_kw=10, capacity_kwh=5)


def test_evaluate_peak_examples():
    f = [10, 30, 10, 10]
    assert evaluate_peak(f, [I] * 4, SMALL) == 30
    assert evaluate_peak(f, [I, D, I, I], SMALL) == 20
    assert evaluate_peak([0] * 4, [I] * 4, SMALL) == 0


def test_evaluate_spot_examples():
    f, p = [10, 10, 10], [1, 5, 1]
    assert evaluate_spot(f, p, [I] * 3, SMALL, 0.25) == 17.5
    assert evaluate_spot(f, p, [C, D, I], SMALL, 0.25) == 7.5
    assert evaluate_spot(f, [0, 0, 0], [C, D, I], SMALL, 0.25) == 0


def test_evaluate_checks_lengths():
    with pytest.raises(ValueError):
        evaluate_peak([1, 2], [I], SMALL)


def problem(forecast, stored, **kwargs):
    return DispatchProblem(market_series(forecast), kwargs.pop("spec", SMALL), BatteryState(stored), **kwargs)


@pytest.mark.parametrize("solver", [solve_dp, solve_brute_force])
def test_flat_forecast_stays_idle(solver):
    spec = BatterySpec(10, 20, reserve_kwh=2.5)
    sol = solver(problem([50] * 4, 2.5, spec=spec))
    assert sol.actions == (I,) * 4
    assert sol.objective_value == 50


@pytest.mark.parametrize("solver", [solve_dp, solve_brute_force])
def test_peak_with_charge_available(solver):
    sol = solver(problem([10, 30, 10, 10], 2.5))
    assert sol.objective_value == 20
    assert sol.actions == (I, D, I, I)


@pytest.mark.parametrize("solver", [solve_dp, solve_brute_force])
def test_peak_from_empty(solver):
    sol = solver(problem([10, 30, 10, 10], 0))
    assert sol.objective_value == 20
    assert sol.actions[:2] == (C, D)
    assert [s.stored_kwh for s in sol.state_trajectory] == [0, 2.5, 0, 0, 0]


@pytest.mark.parametrize("solver", [solve_dp, solve_brute_force])
def test_spot_example(solver):
    spec = BatterySpec(10, 2.5)
    sol = solver(problem([10, 10, 10], 0, spec=spec, objective="spot", prices=market_series([1, 5, 1])))
    assert sol.actions == (C, D, I)
    assert sol.objective_value == 7.5


def test_peak_floor_prefers_fewer_actions():
    # Once 30 kW has been realized, shaving the 25 kW step buys nothing.
    sol = solve_dp(problem([10, 25, 10, 10], 2.5, peak_floor_kw=30))
    assert sol.actions == (I,) * 4
    assert solve_brute_force(problem([10, 25, 10, 10], 2.5, peak_floor_kw=30)).actions == sol.actions


def test_spot_requires_prices():
    with pytest.raises(ValueError):
        problem([1, 2], 0, objective="spot")
    with pytest.raises(ValueError):
        problem([1, 2], 0, prices=market_series([1, 2, 3]))


def test_brute_force_horizon_limit():
    with pytest.raises(HorizonTooLargeError):
        solve_brute_force(problem([10] * 13, 0))
    assert len(solve_dp(problem([10] * 13, 0)).actions) == 13


@pytest.mark.parametrize("solver", [solve_dp, solve_brute_force])
def test_infeasible_initial_state(solver):
    spec = BatterySpec(10, 5, reserve_kwh=2)
    with pytest.raises(InfeasibleError):
        solver(problem([10, 20], 1, spec=spec))


def test_full_day_horizon():
    rng = np.random.default_rng(3)
    f = 60 + 30 * np.sin(np.linspace(0, 2 * np.pi, 96)) + rng.normal(0, 3, 96)
    sol = solve_dp(problem(f, 10, spec=BatterySpec(20, 20)))
    assert len(sol.actions) == 96
    assert sol.objective_value < f.max()


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), objective=st.sampled_from(["peak", "spot"]))
def test_matches_brute_force(seed, objective):
    p = random_problem(np.random.default_rng(seed), objective)
    dp, bf = solve_dp(p), solve_brute_force(p)
    assert dp.objective_value == bf.objective_value
    assert dp.actions == bf.actions
    assert dp.state_trajectory == bf.state_trajectory


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), objective=st.sampled_from(["peak", "spot"]))
def test_solution_is_feasible(seed, objective):
    p = random_problem(np.random.default_rng(seed), objective, steps=12)
    sol = solve_dp(p)
    spec = p.spec
    traj = [s.stored_kwh for s in sol.state_trajectory]
    assert traj[0] == p.initial.stored_kwh
    assert all(spec.reserve_kwh <= s <= spec.capacity_kwh for s in traj)
    for s0, s1, b in zip(traj, traj[1:], sol.actions):
        step = {I: 0.0, C: spec.charge_step_kwh(0.25), D: -spec.discharge_step_kwh(0.25)}[b]
        assert s1 - s0 == pytest.approx(step, abs=2e-6)


@settings(max_examples=100, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    objective=st.sampled_from(["peak", "spot"]),
    factor=st.floats(1.0, 4.0),
)
def test_more_capacity_never_hurts(seed, objective, factor):
    p = random_problem(np.random.default_rng(seed), objective)
    spec = p.spec
    bigger = BatterySpec(spec.power_kw, spec.capacity_kwh * factor, spec.efficiency, spec.reserve_kwh)
    q = DispatchProblem(p.forecast, bigger, p.initial, p.objective, p.prices)
    assert solve_dp(q).objective_value <= solve_dp(p).objective_value + 1e-9


def test_more_power_can_hurt():
    # Discrete actions: a 20 kW step moves 5 kWh, more than the battery holds.
    small = solve_dp(problem([10, 30, 10, 10], 2.5))
    big = solve_dp(problem([10, 30, 10, 10], 2.5, spec=BatterySpec(20, 5)))
    assert small.objective_value == 20
    assert big.objective_value == 30


@settings(max_examples=100, deadline=None)
@given(
    forecast=st.lists(st.integers(-50, 150), min_size=2, max_size=8),
    shift=st.integers(-100, 100),
    stored=st.sampled_from([0.0, 2.5, 5.0, 7.5, 10.0]),
)
def test_peak_shift_equivariance(forecast, shift, stored):
    spec = BatterySpec(10, 10)
    base = solve_dp(problem(forecast, stored, spec=spec))
    moved = solve_dp(problem([v + shift for v in forecast], stored, spec=spec))
    assert moved.objective_value == base.objective_value + shift


@settings(max_examples=100, deadline=None)
@given(
    forecast=st.lists(st.integers(0, 150), min_size=2, max_size=8),
    price=st.sampled_from([0.0, 0.125, 0.25, 0.5, 2.0]),
    power=st.sampled_from([4.0, 8.0, 20.0]),
)
def test_constant_prices_idle_is_optimal(forecast, price, power):
    spec = BatterySpec(power, 40)
    p = problem(forecast, 0, spec=spec, objective="spot", prices=market_series([price] * len(forecast)))
    sol = solve_dp(p)
    idle = evaluate_spot(p.forecast, p.prices, [I] * len(forecast), spec, 0.25)
    assert sol.objective_value == idle
    assert sol.actions == (I,) * len(forecast)
