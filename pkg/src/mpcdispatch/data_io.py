"""CSV ingestion of minute-resolution net load, spot prices and forecasts.

Formats (ISO-8601 timestamps, UTC when no offset is given)::

    timestamp,net_kw               1-min net consumption (load minus PV)
    timestamp,eur_per_mwh          hourly or 15-min spot price
    timestamp,net_kw_forecast      market-resolution forecast
"""

from __future__ import annotations

import csv
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .core import MARKET_STEP, MINUTE, TimeGrid, TimeSeries


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class GapError(DataError):
    def __init__(self, path, gaps: list[tuple[datetime, datetime]]):
        self.gaps = gaps
        ranges = ", ".join(f"{a.isoformat()}..{b.isoformat()}" for a, b in gaps[:10])
        more = f" (+{len(gaps) - 10} more)" if len(gaps) > 10 else ""
        super().__init__(f"{path}: missing samples in {ranges}{more}")


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _read_rows(path, header: tuple[str, ...]) -> list[tuple[int, datetime, float]]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if tuple(c.strip() for c in first) != header:
            raise DataError(f"{path}:1: expected header {','.join(header)!r}, got {','.join(first)!r}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{line}: expected 2 fields, got {len(row)}")
            try:
                ts = parse_timestamp(row[0])
                value = float(row[1])
            except ValueError as exc:
                raise DataError(f"{path}:{line}: {exc}") from None
            if not np.isfinite(value):
                raise DataError(f"{path}:{line}: non-finite value {row[1]!r}")
            rows.append((line, ts, value))
    if not rows:
        raise DataError(f"{path}: no data rows")
    return rows


def _check_order(path, rows) -> None:
    for (_, prev, _), (line, ts, _) in zip(rows, rows[1:]):
        if ts == prev:
            raise DataError(f"{path}:{line}: duplicate timestamp {ts.isoformat()}")
        if ts < prev:
            raise DataError(
                f"{path}:{line}: timestamps out of order ({ts.isoformat()} after {prev.isoformat()})"
            )


def _regular_series(path, rows, resolution: timedelta, fill: str | None) -> TimeSeries:
    _check_order(path, rows)
    start = rows[0][1]
    gaps = []
    values = [rows[0][2]]
    for (_, prev, _), (line, ts, value) in zip(rows, rows[1:]):
        delta = ts - prev
        if delta % resolution:
            raise DataError(f"{path}:{line}: {ts.isoformat()} is off the {resolution} grid")
        missing = delta // resolution - 1
        if missing:
            gaps.append((prev + resolution, ts - resolution))
            if fill == "hold":
                values.extend([values[-1]] * missing)
        values.append(value)
    if gaps and fill != "hold":
        raise GapError(path, gaps)
    return TimeSeries(TimeGrid(start, resolution, len(values)), np.array(values))


def load_power_csv(path, fill: str | None = None) -> TimeSeries:
    """Load a 1-min ``timestamp,net_kw`` file.

    Gaps raise :class:`GapError` unless ``fill="hold"``, which repeats the
    last good sample across each gap.
    """
    if fill not in (None, "hold"):
        raise ValueError(f"unknown fill mode {fill!r}")
    rows = _read_rows(path, ("timestamp", "net_kw"))
    return _regular_series(path, rows, MINUTE, fill)


def load_price_csv(path, resolution: timedelta = MARKET_STEP) -> TimeSeries:
    """Load ``timestamp,eur_per_mwh`` and return currency/kWh at market resolution.

    Hourly input is forward-filled onto the market grid.
    """
    rows = _read_rows(path, ("timestamp", "eur_per_mwh"))
    _check_order(path, rows)
    if len(rows) > 1:
        source = rows[1][1] - rows[0][1]
    else:
        source = timedelta(hours=1)
    if source not in (timedelta(hours=1), resolution):
        raise DataError(f"{path}: price spacing {source} is neither hourly nor {resolution}")
    series = _regular_series(path, rows, source, None)
    repeat = source // resolution
    values = np.repeat(series.values, repeat) / 1000.0
    return TimeSeries(TimeGrid(series.start, resolution, len(values)), values)


def load_forecast_csv(path, resolution: timedelta = MARKET_STEP) -> TimeSeries:
    rows = _read_rows(path, ("timestamp", "net_kw_forecast"))
    return _regular_series(path, rows, resolution, None)


def _write(path, header: str, series: TimeSeries, values) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header.split(","))
        for ts, v in zip(series.grid.timestamps(), values):
            writer.writerow([format_timestamp(ts), repr(float(v))])


def save_power_csv(path, series: TimeSeries) -> None:
    if series.resolution != MINUTE:
        raise ValueError("power files are 1-min resolution")
    _write(path, "timestamp,net_kw", series, series.values)


def save_price_csv(path, series: TimeSeries) -> None:
    """Write currency/kWh prices as currency/MWh.

    Values are rounded to 1e-6 /MWh so prices produced as ``x / 1000``
    reload bit-exact.
    """
    _write(path, "timestamp,eur_per_mwh", series, np.round(series.values * 1000.0, 6))


def save_forecast_csv(path, series: TimeSeries) -> None:
    _write(path, "timestamp,net_kw_forecast", series, series.values)


def resample_mean(series: TimeSeries, target_resolution: timedelta) -> TimeSeries:
    """Average consecutive blocks of ``series`` onto a coarser grid."""
    if target_resolution % series.resolution:
        raise ValueError(
            f"target resolution {target_resolution} is not a multiple of {series.resolution}"
        )
    factor = target_resolution // series.resolution
    if len(series) % factor:
        raise ValueError(f"{len(series)} samples do not fill whole {target_resolution} blocks")
    values = series.values.reshape(-1, factor).mean(axis=1)
    return TimeSeries(TimeGrid(series.start, target_resolution, len(values)), values)
