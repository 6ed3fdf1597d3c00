from datetime import datetime, timezone

import numpy as np
import pytest

from mpcdispatch.core import MARKET_STEP, MINUTE, TimeGrid, TimeSeries

START = datetime(2018, 1, 1, tzinfo=timezone.utc)

# (number, name, passed, detail) recorded by the acceptance tests
CRITERIA: list[tuple[int, str, bool, str]] = []


def market_series(values, start=START) -> TimeSeries:
    return TimeSeries(TimeGrid(start, MARKET_STEP, len(values)), np.asarray(values, dtype=float))


def minute_series(values, start=START) -> TimeSeries:
    return TimeSeries(TimeGrid(start, MINUTE, len(values)), np.asarray(values, dtype=float))


@pytest.fixture
def criteria():
    return CRITERIA


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(CRITERIA):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {name} ({detail})")


def random_problem(rng: np.random.Generator, objective: str, steps: int | None = None):
    """Random small dispatch instance; energies often land on shared multiples."""
    from mpcdispatch.core import BatterySpec, BatteryState
    from mpcdispatch.optimizer import DispatchProblem

    T = int(rng.integers(2, 9)) if steps is None else steps
    power = float(rng.choice([5.0, 10.0, 20.0, rng.uniform(1, 40)]))
    capacity = float(rng.choice([power / 4 * rng.integers(1, 6), rng.uniform(1, 40)]))
    efficiency = float(rng.choice([1.0, 0.9, rng.uniform(0.5, 1.0)]))
    reserve = float(rng.choice([0.0, rng.uniform(0, capacity / 2)]))
    spec = BatterySpec(power, capacity, efficiency, reserve)
    initial = BatteryState(float(rng.choice([reserve, capacity, rng.uniform(reserve, capacity)])))
    if rng.random() < 0.5:
        forecast = rng.integers(0, 60, T).astype(float)
    else:
        forecast = rng.uniform(-20, 120, T)
    prices = None
    if objective == "spot" or rng.random() < 0.3:
        prices = market_series(np.round(rng.uniform(0.0, 0.2, T), 4))
    return DispatchProblem(market_series(forecast), spec, initial, objective, prices)
