"""Day-ahead net-consumption forecasters at market resolution.

Every forecaster takes the minute-resolution history observed so far and
the market grid to forecast, and returns a series on exactly that grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import timedelta
from typing import Protocol

import numpy as np

from .core import COST_PERIOD, TimeGrid, TimeSeries
from .data_io import load_forecast_csv, resample_mean


class InsufficientHistoryError(ValueError):
    pass


class Forecaster(Protocol):
    # Whole days of history the forecaster needs before the horizon.
    history_days: int

    def forecast(self, history: TimeSeries, horizon: TimeGrid) -> TimeSeries: ...


def _full_steps(history: TimeSeries, resolution: timedelta) -> TimeSeries:
    """History at market resolution, dropping a trailing partial step."""
    factor = resolution // history.resolution
    usable = len(history) - len(history) % factor
    trimmed = history.slice(history.start, history.grid.timestamp(usable))
    return resample_mean(trimmed, resolution)


def _lagged(history: TimeSeries, horizon: TimeGrid, lag: timedelta, min_days: int) -> TimeSeries:
    """Value at time ``t`` is history at ``t - k * lag`` for the least k >= 1 on record."""
    market = _full_steps(history, horizon.resolution)
    if market.end - market.start < min_days * COST_PERIOD:
        raise InsufficientHistoryError(
            f"need {min_days} full day(s) of history, have {market.end - market.start}"
        )
    lag_steps = lag // horizon.resolution
    offset = (horizon.start - market.start) // horizon.resolution
    if (horizon.start - market.start) % horizon.resolution:
        raise ValueError("horizon is not aligned with the history grid")
    n = len(market)
    idx = offset + np.arange(horizon.steps)
    k = np.maximum(1, np.ceil((idx - n + 1) / lag_steps).astype(int))
    src = idx - k * lag_steps
    if src.min() < 0:
        raise InsufficientHistoryError("history does not reach back far enough for the horizon")
    return TimeSeries(horizon, market.values[src])


@dataclass
class Persistence:
    """Yesterday, repeated."""

    history_days: int = 1

    def forecast(self, history: TimeSeries, horizon: TimeGrid) -> TimeSeries:
        return _lagged(history, horizon, COST_PERIOD, 1)


@dataclass
class SeasonalNaive:
    """Same weekday one week earlier."""

    history_days: int = 7

    def forecast(self, history: TimeSeries, horizon: TimeGrid) -> TimeSeries:
        return _lagged(history, horizon, 7 * COST_PERIOD, 7)


class PerfectOracle:
    """Returns the actual market-resolution means; the upper-bound forecaster."""

    history_days = 0

    def __init__(self, actuals: TimeSeries, resolution: timedelta | None = None):
        self.actuals = actuals
        self._market: dict[timedelta, TimeSeries] = {}

    def _at(self, resolution: timedelta) -> TimeSeries:
        if resolution not in self._market:
            self._market[resolution] = _full_steps(self.actuals, resolution)
        return self._market[resolution]

    def forecast(self, history: TimeSeries, horizon: TimeGrid) -> TimeSeries:
        market = self._at(horizon.resolution)
        return TimeSeries(horizon, market.slice(horizon.start, horizon.end).values)


class ExternalFile:
    """Precomputed forecasts from a ``timestamp,net_kw_forecast`` CSV."""

    history_days = 0

    def __init__(self, path=None, series: TimeSeries | None = None):
        if series is None:
            if path is None:
                raise ValueError("ExternalFile needs a path or a series")
            series = load_forecast_csv(path)
        self.series = series

    def forecast(self, history: TimeSeries, horizon: TimeGrid) -> TimeSeries:
        if horizon.resolution != self.series.resolution:
            raise ValueError(
                f"forecast file is at {self.series.resolution}, horizon wants {horizon.resolution}"
            )
        if horizon.start < self.series.start or horizon.end > self.series.end:
            raise InsufficientHistoryError(
                f"forecast file covers {self.series.start.isoformat()}..{self.series.end.isoformat()}, "
                f"horizon needs {horizon.start.isoformat()}..{horizon.end.isoformat()}"
            )
        return TimeSeries(horizon, self.series.slice(horizon.start, horizon.end).values)


def forecast_persistence(history: TimeSeries, horizon: TimeGrid) -> TimeSeries:
    return Persistence().forecast(history, horizon)


def forecast_seasonal_naive(history: TimeSeries, horizon: TimeGrid) -> TimeSeries:
    return SeasonalNaive().forecast(history, horizon)


@dataclass(frozen=True)
class DayError:
    date: str
    mae_kw: float
    mape_pct: float


def forecast_error_report(
    forecaster: Forecaster,
    corpus: TimeSeries,
    market_resolution: timedelta = timedelta(minutes=15),
    skip_days: int | None = None,
) -> list[DayError]:
    """Per-day MAE and MAPE of day-ahead forecasts over a minute-level corpus.

    Days without enough history for the forecaster are skipped.  MAPE
    ignores steps whose actual value is zero.
    """
    if skip_days is None:
        skip_days = forecaster.history_days
    actual = resample_mean(corpus, market_resolution)
    per_day = COST_PERIOD // market_resolution
    minutes_per_day = COST_PERIOD // corpus.resolution
    rows = []
    for d in range(skip_days, len(actual) // per_day):
        day_start = actual.grid.timestamp(d * per_day)
        horizon = TimeGrid(day_start, market_resolution, per_day)
        history = corpus.slice(corpus.start, corpus.grid.timestamp(d * minutes_per_day))
        predicted = forecaster.forecast(history, horizon).values
        truth = actual.values[d * per_day : (d + 1) * per_day]
        err = np.abs(predicted - truth)
        nz = truth != 0
        mape = 100.0 * float(np.mean(err[nz] / np.abs(truth[nz]))) if nz.any() else math.nan
        rows.append(DayError(day_start.date().isoformat(), float(err.mean()), mape))
    return rows
