"""Plan construction and minute-level closed-loop plan tracking.

Each market step the controller re-forecasts the rest of the cost period,
re-optimizes from the measured battery state and rebuilds the target
profile.  Every minute it compares the running mean of realized net power
in the current step with the target and charges, discharges or idles.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from datetime import timedelta
from typing import Callable, Sequence

import numpy as np

from .core import (
    MARKET_STEP,
    MINUTE,
    Action,
    BatterySpec,
    BatteryState,
    TimeGrid,
    TimeSeries,
    hours,
    is_feasible,
    kW,
    step_battery,
)
from .forecasting import Forecaster
from .optimizer import DispatchProblem, DispatchSolution, InfeasibleError, Objective, solve_dp

# |delta P| at or below this is treated as exactly on target.
ZERO_TOLERANCE_KW = 1e-9


class ReplanCadence(str, enum.Enum):
    EVERY_MINUTE = "minute"
    EVERY_MARKET_STEP = "step"


@dataclass(frozen=True)
class ControllerConfig:
    # Must stay below 1/minutes-per-step, or the last minutes of every planned
    # charge/discharge step fall inside the deadband.
    tolerance_phi: float = 0.05
    replan_cadence: ReplanCadence = ReplanCadence.EVERY_MARKET_STEP

    def __post_init__(self):
        if not 0 <= self.tolerance_phi <= 1:
            raise ValueError(f"tolerance_phi must be in [0, 1], got {self.tolerance_phi}")
        object.__setattr__(self, "replan_cadence", ReplanCadence(self.replan_cadence))

    def threshold_kw(self, spec: BatterySpec) -> kW:
        return self.tolerance_phi * spec.power_kw


@dataclass(frozen=True)
class ConsumptionPlan:
    target_kw: TimeSeries


def build_plan(forecast: TimeSeries, actions: Sequence[Action], spec: BatterySpec) -> ConsumptionPlan:
    """Target net power per market step: forecast plus scheduled battery power."""
    if len(actions) != len(forecast):
        raise ValueError(f"{len(actions)} actions for a forecast of {len(forecast)} steps")
    b = np.fromiter((int(a) for a in actions), dtype=float, count=len(actions))
    return ConsumptionPlan(TimeSeries(forecast.grid, forecast.values + b * spec.power_kw))


def tracking_error(realized_minutes: Sequence[float], target: kW) -> kW:
    """Mean realized power so far in the market step minus the target."""
    n = len(realized_minutes)
    if n == 0:
        raise ValueError("tracking error needs at least one realized minute")
    return sum(realized_minutes) / n - target


def decide_action(
    delta_p: kW,
    config: ControllerConfig,
    state: BatteryState,
    spec: BatterySpec,
    duration_h: float = 1 / 60,
) -> Action:
    """Threshold rule; an infeasible choice degrades to Idle."""
    if abs(delta_p) < config.threshold_kw(spec) or abs(delta_p) <= ZERO_TOLERANCE_KW:
        return Action.IDLE
    action = Action.DISCHARGE if delta_p > 0 else Action.CHARGE
    if not is_feasible(state, action, spec, duration_h):
        return Action.IDLE
    return action


@dataclass
class ControlLog:
    """Minute-by-minute record of one controlled cost period."""

    grid: TimeGrid  # minute grid of the period
    baseline_kw: np.ndarray
    actions: np.ndarray
    stored_kwh: np.ndarray  # after each minute's action
    target_kw: np.ndarray
    realized_kw: np.ndarray
    delta_p_kw: np.ndarray
    final_state: BatteryState
    planned_actions: np.ndarray  # per market step, from the plan in force at that step
    replans: int = 0
    failed_replans: int = 0


Solver = Callable[[DispatchProblem], DispatchSolution]


def _project(state: BatteryState, action: Action, spec: BatterySpec, duration_h: float) -> BatteryState:
    """State after holding ``action`` for ``duration_h``, clipped to the hard bounds."""
    if action == Action.CHARGE:
        stored = state.stored_kwh + spec.charge_step_kwh(duration_h)
    elif action == Action.DISCHARGE:
        stored = state.stored_kwh - spec.discharge_step_kwh(duration_h)
    else:
        return state
    return BatteryState(min(max(stored, 0.0), spec.capacity_kwh))


def run_control_loop(
    day_actual: TimeSeries,
    history: TimeSeries,
    forecaster: Forecaster,
    spec: BatterySpec,
    initial: BatteryState,
    config: ControllerConfig = ControllerConfig(),
    objective: Objective = Objective.PEAK,
    prices: TimeSeries | None = None,
    solver: Solver = solve_dp,
    market_resolution: timedelta = MARKET_STEP,
) -> ControlLog:
    """Control one cost period of minute data.

    ``history`` is the minute data observed before ``day_actual`` starts;
    the forecaster sees it plus the minutes of the day realized so far.
    ``prices`` (market resolution, aligned with the day) are required for
    the spot objective and optional otherwise.

    The realized value of the current minute enters the tracking error as
    the metered net load before the battery acts on that minute.
    """
    if day_actual.resolution != MINUTE:
        raise ValueError("day_actual must be 1-min resolution")
    per_step = market_resolution // MINUTE
    n = len(day_actual)
    if n % per_step:
        raise ValueError("day does not cover whole market steps")
    steps = n // per_step
    if objective == Objective.SPOT and prices is None:
        raise ValueError("spot objective requires prices")
    day_start = day_actual.start
    if history.end != day_start and len(history):
        raise ValueError("history must end where the day starts")
    dt_min = hours(MINUTE)
    power = spec.power_kw

    load = day_actual.values
    actions = np.zeros(n, dtype=np.int8)
    stored = np.empty(n)
    targets = np.empty(n)
    realized = np.empty(n)
    deltas = np.empty(n)
    planned = np.zeros(steps, dtype=np.int8)

    plan_targets: np.ndarray | None = None
    plan_actions: np.ndarray | None = None
    hist_values = history.values
    state = initial
    replans = failed = 0
    step_means: list[float] = []
    step_realized: list[float] = []
    every_minute = config.replan_cadence == ReplanCadence.EVERY_MINUTE

    def replan(minute: int, first: int, start: BatteryState, floor: float | None):
        """Forecast from data before ``minute`` and optimize steps ``first..``."""
        observed = np.concatenate([hist_values, load[:minute]])
        seen = TimeSeries(TimeGrid(history.start if len(history) else day_start, MINUTE, len(observed)), observed)
        horizon = TimeGrid(day_start + first * market_resolution, market_resolution, steps - first)
        forecast = forecaster.forecast(seen, horizon)
        day_prices = None if prices is None else TimeSeries(horizon, prices.values[first:])
        problem = DispatchProblem(forecast, spec, start, objective, day_prices, floor)
        try:
            return forecast, solver(problem)
        except InfeasibleError:
            return forecast, None

    for m in range(n):
        k, j = divmod(m, per_step)
        if j == 0:
            step_realized = []
            forecast, solution = replan(m, k, state, max(step_means) if step_means else None)
            replans += 1
            if solution is None:
                # Keep following the previous plan; with none yet, follow
                # the forecast with the battery idle.
                failed += 1
                if plan_targets is None:
                    plan_targets = np.array(forecast.values)
                    plan_actions = np.zeros(steps, dtype=np.int8)
            else:
                b = np.array([int(a) for a in solution.actions], dtype=np.int8)
                if plan_targets is None:
                    plan_targets = np.empty(steps)
                    plan_actions = np.zeros(steps, dtype=np.int8)
                plan_targets[k:] = forecast.values + b * power
                plan_actions[k:] = b
            planned[k] = plan_actions[k]
        elif every_minute and k + 1 < steps:
            # Mid-step the current action stays committed; the rest of the
            # day is re-optimized from where it would leave the battery.
            projected = _project(state, Action(int(plan_actions[k])), spec, (per_step - j) * dt_min)
            floor = max(step_means + [float(plan_targets[k])])
            forecast, solution = replan(m, k + 1, projected, floor)
            replans += 1
            if solution is None:
                failed += 1
            else:
                b = np.array([int(a) for a in solution.actions], dtype=np.int8)
                plan_targets[k + 1 :] = forecast.values + b * power
                plan_actions[k + 1 :] = b

        target = plan_targets[k]
        now = load[m]
        step_realized.append(now)
        delta_p = tracking_error(step_realized, target)
        action = decide_action(delta_p, config, state, spec, dt_min)
        state, grid_delta = step_battery(state, action, spec, dt_min)
        step_realized[-1] = now + grid_delta

        actions[m] = action
        stored[m] = state.stored_kwh
        targets[m] = target
        realized[m] = now + grid_delta
        deltas[m] = delta_p
        if j == per_step - 1:
            step_means.append(sum(step_realized) / per_step)

    return ControlLog(
        grid=day_actual.grid,
        baseline_kw=np.array(load),
        actions=actions,
        stored_kwh=stored,
        target_kw=targets,
        realized_kw=realized,
        delta_p_kw=deltas,
        final_state=state,
        planned_actions=planned,
        replans=replans,
        failed_replans=failed,
    )
