import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpcdispatch.baseline_rule import (
    RuleConfig,
    Thresholds,
    compute_thresholds,
    load_thresholds,
    rule_based_step,
    run_rule_day,
)
from mpcdispatch.core import Action, BatterySpec, BatteryState
from mpcdispatch.forecasting import InsufficientHistoryError
from mpcdispatch.optimizer import Objective
from mpcdispatch.synthetic import StoreProfileConfig, generate_price, generate_synthetic
from conftest import minute_series

SPEC = BatterySpec(20, 20)
WINDOW = np.arange(1.0, 101.0)


def test_thresholds_are_percentiles():
    t = compute_thresholds(WINDOW, RuleConfig(discharge_percentile=90, charge_percentile=30))
    assert t.high == pytest.approx(np.percentile(WINDOW, 90))
    assert t.low == pytest.approx(np.percentile(WINDOW, 30))


def test_rule_examples():
    t = compute_thresholds(WINDOW, RuleConfig())
    median = float(np.percentile(WINDOW, 50))
    assert rule_based_step(median, t, BatteryState(10), SPEC) == Action.IDLE
    assert rule_based_step(t.high + 1, t, BatteryState(10), SPEC) == Action.DISCHARGE
    assert rule_based_step(t.low - 1, t, BatteryState(10), SPEC) == Action.CHARGE
    assert rule_based_step(t.low - 1, t, BatteryState(20), SPEC) == Action.IDLE
    assert rule_based_step(t.high + 1, t, BatteryState(0), SPEC) == Action.IDLE


def test_invalid_percentiles():
    with pytest.raises(ValueError):
        RuleConfig(discharge_percentile=30, charge_percentile=30)
    with pytest.raises(ValueError):
        RuleConfig(lookback_days=0)


def test_needs_history():
    with pytest.raises(InsufficientHistoryError):
        load_thresholds(minute_series([1.0] * 100), RuleConfig())


@settings(max_examples=100, deadline=None)
@given(
    load=st.floats(-50, 200),
    stored=st.floats(0, 20),
    lo=st.floats(0, 100),
    width=st.floats(0, 100),
    noise=st.lists(st.floats(-50, 200), max_size=10),
)
def test_memoryless(load, stored, lo, width, noise):
    t = Thresholds(lo, lo + width)
    first = rule_based_step(load, t, BatteryState(stored), SPEC)
    for other in noise:
        rule_based_step(other, t, BatteryState(stored), SPEC)
    assert rule_based_step(load, t, BatteryState(stored), SPEC) == first


def test_rule_day_shaves_and_stays_in_bounds():
    corpus = generate_synthetic(StoreProfileConfig(), 2)
    history, day = corpus.days()
    log = run_rule_day(day, history, SPEC, BatteryState(10))
    assert np.all((log.stored_kwh >= 0) & (log.stored_kwh <= 20))
    before = day.values.reshape(-1, 15).mean(axis=1).max()
    after = log.realized_kw.reshape(-1, 15).mean(axis=1).max()
    assert after < before


def test_spot_rule_uses_prices():
    corpus = generate_synthetic(StoreProfileConfig(), 2)
    history, day = corpus.days()
    prices = generate_price(2, amplitude=0.02)
    log = run_rule_day(
        day, history, SPEC, BatteryState(10), objective=Objective.SPOT,
        prices=prices.slice(day.start, day.end), price_history=prices.slice(history.start, history.end),
    )
    p = np.repeat(prices.values[96:], 15)
    assert np.all(p[log.actions == -1] > np.percentile(prices.values[:96], 90))
