"""Non-predictive threshold controller used as the comparison baseline.

Thresholds are percentiles of the previous days' 15-min mean net load (or
of their spot prices for the spot objective).  Above the high threshold
the battery discharges, below the low one it charges.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import timedelta

import numpy as np

from .controller import ControlLog
from .core import (
    COST_PERIOD,
    MARKET_STEP,
    MINUTE,
    Action,
    BatterySpec,
    BatteryState,
    TimeSeries,
    hours,
    is_feasible,
    step_battery,
)
from .data_io import resample_mean
from .forecasting import InsufficientHistoryError
from .optimizer import Objective


@dataclass(frozen=True)
class RuleConfig:
    discharge_percentile: float = 90.0
    charge_percentile: float = 30.0
    lookback_days: int = 1

    def __post_init__(self):
        if not 0 <= self.charge_percentile < self.discharge_percentile <= 100:
            raise ValueError(
                "need 0 <= charge_percentile < discharge_percentile <= 100, got "
                f"{self.charge_percentile}, {self.discharge_percentile}"
            )
        if self.lookback_days < 1:
            raise ValueError("lookback_days must be >= 1")


@dataclass(frozen=True)
class Thresholds:
    low: float
    high: float


def compute_thresholds(window: np.ndarray, config: RuleConfig) -> Thresholds:
    low, high = np.percentile(window, [config.charge_percentile, config.discharge_percentile])
    return Thresholds(float(low), float(high))


def load_thresholds(
    history: TimeSeries, config: RuleConfig, market_resolution: timedelta = MARKET_STEP
) -> Thresholds:
    """Percentile thresholds over the last ``lookback_days`` of 15-min mean load."""
    span = config.lookback_days * COST_PERIOD
    if history.end - history.start < span:
        raise InsufficientHistoryError(f"rule baseline needs {config.lookback_days} day(s) of history")
    window = history.slice(history.end - span, history.end)
    return compute_thresholds(resample_mean(window, market_resolution).values, config)


def rule_based_step(
    current: float, thresholds: Thresholds, state: BatteryState, spec: BatterySpec, duration_h: float = 1 / 60
) -> Action:
    if current > thresholds.high:
        action = Action.DISCHARGE
    elif current < thresholds.low:
        action = Action.CHARGE
    else:
        return Action.IDLE
    return action if is_feasible(state, action, spec, duration_h) else Action.IDLE


def run_rule_day(
    day_actual: TimeSeries,
    history: TimeSeries,
    spec: BatterySpec,
    initial: BatteryState,
    config: RuleConfig = RuleConfig(),
    objective: Objective = Objective.PEAK,
    prices: TimeSeries | None = None,
    price_history: TimeSeries | None = None,
) -> ControlLog:
    """Run the rule for one cost period of minute data.

    For the spot objective the rule reads the current market price instead
    of the load, with thresholds from ``price_history``.
    """
    per_step = MARKET_STEP // MINUTE
    n = len(day_actual)
    load = day_actual.values
    if objective == Objective.SPOT:
        if prices is None or price_history is None:
            raise ValueError("spot rule needs prices and price history")
        span = config.lookback_days * COST_PERIOD
        if price_history.end - price_history.start < span:
            raise InsufficientHistoryError(f"rule baseline needs {config.lookback_days} day(s) of prices")
        window = price_history.slice(price_history.end - span, price_history.end)
        thresholds = compute_thresholds(window.values, config)
        signal = np.repeat(prices.values, per_step)
    else:
        thresholds = load_thresholds(history, config)
        signal = load

    dt_min = hours(MINUTE)
    actions = np.zeros(n, dtype=np.int8)
    stored = np.empty(n)
    realized = np.empty(n)
    state = initial
    for m in range(n):
        action = rule_based_step(float(signal[m]), thresholds, state, spec, dt_min)
        state, grid_delta = step_battery(state, action, spec, dt_min)
        actions[m] = action
        stored[m] = state.stored_kwh
        realized[m] = load[m] + grid_delta
    nan = np.full(n, np.nan)
    return ControlLog(
        grid=day_actual.grid,
        baseline_kw=np.array(load),
        actions=actions,
        stored_kwh=stored,
        target_kw=nan,
        realized_kw=realized,
        delta_p_kw=nan.copy(),
        final_state=state,
        planned_actions=np.zeros(n // per_step, dtype=np.int8),
    )
