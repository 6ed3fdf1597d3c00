"""Domain types, units and time-grid arithmetic shared by every module.

Power is kW, energy kWh, prices currency/kWh, durations hours unless a
``timedelta`` is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import IntEnum
from typing import Sequence

import numpy as np

kW = float
kWh = float

COST_PERIOD = timedelta(hours=24)
MINUTE = timedelta(minutes=1)
MARKET_STEP = timedelta(minutes=15)

# Battery energy is quantized to this grid (kWh) so that lattice
# states reached along different paths compare equal.
QUANTUM = 1e9
BOUND_TOLERANCE_KWH = 1e-6


class BatteryError(ValueError):
    """An action would push stored energy outside [0, capacity]."""


class Action(IntEnum):
    DISCHARGE = -1
    IDLE = 0
    CHARGE = 1


# Tie-break order used by every solver.
ACTION_PREFERENCE = (Action.IDLE, Action.DISCHARGE, Action.CHARGE)


def hours(duration: timedelta) -> float:
    return duration.total_seconds() / 3600.0


@dataclass(frozen=True)
class TimeGrid:
    start: datetime
    resolution: timedelta
    steps: int

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError(f"steps must be non-negative, got {self.steps}")
        if self.resolution <= timedelta(0):
            raise ValueError("resolution must be positive")
        if COST_PERIOD % self.resolution:
            raise ValueError(
                f"resolution {self.resolution} does not divide the 24 h cost period"
            )
        if self.start.tzinfo is None:
            object.__setattr__(self, "start", self.start.replace(tzinfo=timezone.utc))

    @property
    def end(self) -> datetime:
        return self.start + self.steps * self.resolution

    @property
    def steps_per_day(self) -> int:
        return COST_PERIOD // self.resolution

    @property
    def step_hours(self) -> float:
        return hours(self.resolution)

    def timestamp(self, i: int) -> datetime:
        return self.start + i * self.resolution

    def timestamps(self) -> list[datetime]:
        return [self.start + i * self.resolution for i in range(self.steps)]

    def index_of(self, when: datetime) -> int:
        """Index of the step starting at ``when``; must lie on the grid."""
        offset = when - self.start
        if offset % self.resolution:
            raise ValueError(f"{when.isoformat()} is not aligned to the grid")
        return offset // self.resolution


def minutes_per_step(market_resolution: timedelta = MARKET_STEP) -> int:
    """Minutes per market step (15 for the default market)."""
    return market_resolution // MINUTE


def steps_per_day(market_resolution: timedelta = MARKET_STEP) -> int:
    return COST_PERIOD // market_resolution


@dataclass(frozen=True, eq=False)
class TimeSeries:
    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if len(values) != self.grid.steps:
            raise ValueError(
                f"{len(values)} values for a grid of {self.grid.steps} steps"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(
        cls, start: datetime, resolution: timedelta, values: Sequence[float]
    ) -> TimeSeries:
        return cls(TimeGrid(start, resolution, len(values)), np.asarray(values, dtype=float))

    def __len__(self) -> int:
        return self.grid.steps

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    @property
    def start(self) -> datetime:
        return self.grid.start

    @property
    def resolution(self) -> timedelta:
        return self.grid.resolution

    @property
    def end(self) -> datetime:
        return self.grid.end

    def slice(self, start: datetime, end: datetime) -> TimeSeries:
        """Sub-series covering [start, end); both bounds must lie on the grid."""
        i, j = self.grid.index_of(start), self.grid.index_of(end)
        if i < 0 or j > self.grid.steps or i > j:
            raise ValueError(
                f"[{start.isoformat()}, {end.isoformat()}) outside series "
                f"[{self.start.isoformat()}, {self.end.isoformat()})"
            )
        return TimeSeries(TimeGrid(start, self.resolution, j - i), self.values[i:j])

    def days(self) -> list[TimeSeries]:
        """Split into whole cost periods; the series must start on a day boundary."""
        per_day = self.grid.steps_per_day
        if self.grid.steps % per_day:
            raise ValueError("series does not cover a whole number of days")
        return [
            self.slice(self.grid.timestamp(k), self.grid.timestamp(k + per_day))
            for k in range(0, self.grid.steps, per_day)
        ]


@dataclass(frozen=True)
class BatterySpec:
    power_kw: kW
    capacity_kwh: kWh
    efficiency: float = 1.0
    reserve_kwh: kWh = 0.0

    def __post_init__(self):
        # Bounds live on the same lattice as stored energy.
        object.__setattr__(self, "capacity_kwh", quantize_kwh(float(self.capacity_kwh)))
        object.__setattr__(self, "reserve_kwh", quantize_kwh(float(self.reserve_kwh)))
        if not self.power_kw > 0:
            raise ValueError(f"power_kw must be positive, got {self.power_kw}")
        if not self.capacity_kwh > 0:
            raise ValueError(f"capacity_kwh must be positive, got {self.capacity_kwh}")
        if not 0 < self.efficiency <= 1:
            raise ValueError(f"efficiency must be in (0, 1], got {self.efficiency}")
        if not 0 <= self.reserve_kwh <= self.capacity_kwh:
            raise ValueError(
                f"reserve_kwh must be in [0, capacity_kwh], got {self.reserve_kwh}"
            )

    def charge_step_kwh(self, duration_h: float) -> kWh:
        """Energy stored by one charge action of the given length."""
        return quantize_kwh(self.efficiency * self.power_kw * duration_h)

    def discharge_step_kwh(self, duration_h: float) -> kWh:
        return quantize_kwh(self.power_kw * duration_h)


@dataclass(frozen=True)
class BatteryState:
    """Stored energy, kept on the 1e-9 kWh lattice.

    Quantizing here (and in the step sizes) makes charge-then-discharge an
    exact round trip instead of a float approximation.
    """

    stored_kwh: kWh

    def __post_init__(self):
        object.__setattr__(self, "stored_kwh", quantize_kwh(float(self.stored_kwh)))

    def soc(self, spec: BatterySpec) -> float:
        return self.stored_kwh / spec.capacity_kwh


def settle(stored: kWh, lo: kWh, hi: kWh) -> kWh | None:
    """Snap ``stored`` into [lo, hi] if it misses by at most BOUND_TOLERANCE_KWH.

    Returns None when the bound is violated by more than that.  Minute
    steps do not add up exactly to a market step on the 1e-9 lattice, so
    the planner and the battery both allow this much slack at the bounds.
    """
    if stored < lo:
        return lo if stored >= lo - BOUND_TOLERANCE_KWH else None
    if stored > hi:
        return hi if stored <= hi + BOUND_TOLERANCE_KWH else None
    return stored


def _after(state: BatteryState, action: Action, spec: BatterySpec, duration_h: float) -> kWh:
    if action == Action.CHARGE:
        return quantize_kwh(state.stored_kwh + spec.charge_step_kwh(duration_h))
    if action == Action.DISCHARGE:
        return quantize_kwh(state.stored_kwh - spec.discharge_step_kwh(duration_h))
    return state.stored_kwh


def is_feasible(
    state: BatteryState, action: Action, spec: BatterySpec, duration_h: float
) -> bool:
    if action == Action.IDLE:
        return True
    return settle(_after(state, action, spec, duration_h), 0.0, spec.capacity_kwh) is not None


def step_battery(
    state: BatteryState, action: Action, spec: BatterySpec, duration_h: float
) -> tuple[BatteryState, kW]:
    """Apply one action for ``duration_h`` hours.

    Losses are charged on the way in: a charge draws ``power_kw`` from the
    grid and stores ``efficiency * power_kw * duration_h``; a discharge
    delivers ``power_kw`` and drains ``power_kw * duration_h``.

    Returns the new state and the change in grid power (positive = more
    drawn from the grid).
    """
    action = Action(action)
    if action == Action.IDLE:
        return state, 0.0
    raw = _after(state, action, spec, duration_h)
    stored = settle(raw, 0.0, spec.capacity_kwh)
    if stored is None:
        if action == Action.CHARGE:
            raise BatteryError(
                f"charge would exceed capacity: {raw:.9g} > {spec.capacity_kwh:.9g} kWh"
            )
        raise BatteryError(f"discharge would go below empty: {raw:.9g} < 0 kWh")
    return BatteryState(stored), spec.power_kw * int(action)


def quantize_kwh(x: float) -> float:
    """Round planned energy to the planning lattice.

    Uses only IEEE-exact primitives so this and :func:`quantize_kwh_array`
    agree bit for bit.
    """
    return math.floor(x * QUANTUM + 0.5) / QUANTUM


def quantize_kwh_array(x: np.ndarray) -> np.ndarray:
    return np.floor(x * QUANTUM + 0.5) / QUANTUM
