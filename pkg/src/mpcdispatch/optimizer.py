"""Day-ahead battery dispatch: exact dynamic programming plus a brute-force oracle.

Actions are taken per market step.  The battery moves on a lattice of
quantized stored-energy values, so the set of reachable states per step
is small and the problem can be solved exactly:

* peak objective: minimise ``max_t(forecast_t + b_t * power)``, then among
  peak-optimal schedules minimise spot cost (when prices are given) or the
  number of non-idle steps;
* spot objective: minimise ``sum_t (forecast_t + b_t * power) * price_t * dt``.

Ties are broken in favour of Idle, then Discharge, then Charge, earliest
step first.  :func:`solve_brute_force` reproduces the same choice by
enumerating sequences in that lexicographic order.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    ACTION_PREFERENCE,
    BOUND_TOLERANCE_KWH,
    QUANTUM,
    Action,
    BatterySpec,
    BatteryState,
    TimeSeries,
    kW,
    quantize_kwh,
    quantize_kwh_array,
    settle,
)

MAX_BRUTE_FORCE_STEPS = 12


class Objective(str, enum.Enum):
    PEAK = "peak"
    SPOT = "spot"


class InfeasibleError(ValueError):
    """No action sequence satisfies the battery bounds and reserve."""


class HorizonTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class DispatchProblem:
    forecast: TimeSeries
    spec: BatterySpec
    initial: BatteryState
    objective: Objective = Objective.PEAK
    prices: TimeSeries | None = None
    # Peak already realised earlier in the cost period; the planner gains
    # nothing by pushing the remaining steps below it.
    peak_floor_kw: kW | None = None

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective))
        if len(self.forecast) < 1:
            raise ValueError("forecast must cover at least one market step")
        if self.objective == Objective.SPOT and self.prices is None:
            raise ValueError("spot objective requires prices")
        if self.prices is not None and len(self.prices) != len(self.forecast):
            raise ValueError(
                f"prices ({len(self.prices)}) and forecast ({len(self.forecast)}) lengths differ"
            )

    @property
    def steps(self) -> int:
        return len(self.forecast)

    @property
    def step_hours(self) -> float:
        return self.forecast.grid.step_hours


@dataclass(frozen=True)
class DispatchSolution:
    actions: tuple[Action, ...]
    objective_value: float
    state_trajectory: tuple[BatteryState, ...] = field(repr=False)


def _check_lengths(forecast, actions, prices=None) -> None:
    if len(actions) != len(forecast):
        raise ValueError(f"{len(actions)} actions for a forecast of {len(forecast)} steps")
    if prices is not None and len(prices) != len(forecast):
        raise ValueError(f"{len(prices)} prices for a forecast of {len(forecast)} steps")


def _values(x) -> Sequence[float]:
    return x.values if isinstance(x, TimeSeries) else x


def net_power(forecast, actions, spec: BatterySpec) -> list[float]:
    f = _values(forecast)
    _check_lengths(f, actions)
    return [float(f[t]) + int(b) * spec.power_kw for t, b in enumerate(actions)]


def evaluate_peak(forecast, actions, spec: BatterySpec) -> kW:
    """Largest planned net power over the horizon."""
    return max(net_power(forecast, actions, spec))


def evaluate_spot(forecast, prices, actions, spec: BatterySpec, step_hours: float) -> float:
    """Energy cost of the planned net power.

    Summed last step first; the solvers accumulate in the same order, so
    their objective values agree to the last bit.
    """
    f, p = _values(forecast), _values(prices)
    _check_lengths(f, actions, p)
    total = 0.0
    for t in range(len(f) - 1, -1, -1):
        total = ((float(f[t]) + int(actions[t]) * spec.power_kw) * float(p[t])) * step_hours + total
    return total


def _bounds(problem: DispatchProblem) -> tuple[float, float]:
    spec = problem.spec
    lo, hi = spec.reserve_kwh, spec.capacity_kwh
    s1 = problem.initial.stored_kwh
    if s1 < lo:
        raise InfeasibleError(
            f"initial stored energy {s1:.6g} kWh is below the reserve {lo:.6g} kWh"
        )
    if s1 > hi:
        raise InfeasibleError(f"initial stored energy {s1:.6g} kWh exceeds capacity {hi:.6g} kWh")
    return lo, hi


def _deltas(problem: DispatchProblem) -> dict[int, float]:
    dt = problem.step_hours
    return {
        0: 0.0,
        -1: -problem.spec.discharge_step_kwh(dt),
        1: problem.spec.charge_step_kwh(dt),
    }


def _objective_value(problem: DispatchProblem, actions) -> float:
    if problem.objective == Objective.PEAK:
        return evaluate_peak(problem.forecast, actions, problem.spec)
    return evaluate_spot(problem.forecast, problem.prices, actions, problem.spec, problem.step_hours)


def _trajectory(problem: DispatchProblem, actions) -> tuple[BatteryState, ...]:
    deltas = _deltas(problem)
    s = problem.initial.stored_kwh
    out = [BatteryState(s)]
    lo, hi = problem.spec.reserve_kwh, problem.spec.capacity_kwh
    for b in actions:
        s = settle(quantize_kwh(s + deltas[int(b)]), lo, hi)
        out.append(BatteryState(s))
    return tuple(out)


def solve_dp(problem: DispatchProblem) -> DispatchSolution:
    """Exactly optimal schedule by backward induction over reachable states."""
    lo, hi = _bounds(problem)
    T = problem.steps
    power = problem.spec.power_kw
    dt = problem.step_hours
    f = [float(v) for v in problem.forecast.values]
    prices = None if problem.prices is None else [float(v) for v in problem.prices.values]
    deltas = _deltas(problem)
    prefs = [int(a) for a in ACTION_PREFERENCE]

    # Forward pass: reachable states per step and their feasible moves,
    # listed in preference order.  quantize_kwh and settle are inlined here;
    # this loop dominates simulation time.
    q = QUANTUM
    floor_ = math.floor
    tol = BOUND_TOLERANCE_KWH
    lo_tol, hi_tol = lo - tol, hi + tol
    steps = [(b, deltas[b]) for b in prefs]
    levels: list[list[float]] = [[problem.initial.stored_kwh]]
    moves: list[list[list[tuple[int, int]]]] = []
    for t in range(T):
        index: dict[float, int] = {}
        nxt: list[float] = []
        step_moves = []
        for s in levels[t]:
            row = []
            for b, d in steps:
                if d:
                    s2 = floor_((s + d) * q + 0.5) / q
                    if s2 < lo:
                        if s2 < lo_tol:
                            continue
                        s2 = lo
                    elif s2 > hi:
                        if s2 > hi_tol:
                            continue
                        s2 = hi
                else:
                    s2 = s
                j = index.get(s2)
                if j is None:
                    j = index[s2] = len(nxt)
                    nxt.append(s2)
                row.append((b, j))
            step_moves.append(row)
        moves.append(step_moves)
        levels.append(nxt)

    net = [{b: f[t] + b * power for b in prefs} for t in range(T)]

    limit = math.inf
    if problem.objective == Objective.PEAK:
        floor = -math.inf if problem.peak_floor_kw is None else float(problem.peak_floor_kw)
        value = [floor] * len(levels[T])
        for t in range(T - 1, -1, -1):
            nt = net[t]
            cur = []
            for row in moves[t]:
                best = math.inf
                for b, j in row:
                    v = nt[b]
                    w = value[j]
                    if w > v:
                        v = w
                    if v < best:
                        best = v
                cur.append(best)
            value = cur
        limit = value[0]

    if problem.objective == Objective.SPOT or prices is not None:
        cost = [{b: ((net[t][b]) * prices[t]) * dt for b in prefs} for t in range(T)]
    else:
        cost = [{b: float(abs(b)) for b in prefs} for _ in range(T)]

    # Additive pass, restricted to moves that respect the optimal peak.
    inf = math.inf
    tables: list[list[float]] = [None] * (T + 1)  # type: ignore[list-item]
    tables[T] = [0.0] * len(levels[T])
    for t in range(T - 1, -1, -1):
        nt, ct, after = net[t], cost[t], tables[t + 1]
        cur = []
        for row in moves[t]:
            best = inf
            for b, j in row:
                if nt[b] <= limit:
                    v = ct[b] + after[j]
                    if v < best:
                        best = v
            cur.append(best)
        tables[t] = cur
    if tables[0][0] == inf:
        raise InfeasibleError("no feasible schedule")  # unreachable when s1 is in bounds

    actions = []
    trajectory = [problem.initial]
    i = 0
    for t in range(T):
        target = tables[t][i]
        nt, ct, after = net[t], cost[t], tables[t + 1]
        for b, j in moves[t][i]:
            if nt[b] <= limit and ct[b] + after[j] == target:
                actions.append(Action(b))
                trajectory.append(BatteryState(levels[t + 1][j]))
                i = j
                break
    return DispatchSolution(tuple(actions), _objective_value(problem, actions), tuple(trajectory))


def solve_brute_force(problem: DispatchProblem) -> DispatchSolution:
    """Enumerate every action sequence; verification oracle for :func:`solve_dp`."""
    T = problem.steps
    if T > MAX_BRUTE_FORCE_STEPS:
        raise HorizonTooLargeError(
            f"brute force is limited to {MAX_BRUTE_FORCE_STEPS} steps, got {T}"
        )
    lo, hi = _bounds(problem)
    power = problem.spec.power_kw
    dt = problem.step_hours
    deltas = _deltas(problem)

    pref = np.array([int(a) for a in ACTION_PREFERENCE])
    # Row k holds the base-3 digits of k, most significant first: the
    # lexicographic order of the preference-ranked alphabet.
    digits = (np.arange(3**T)[:, None] // 3 ** np.arange(T - 1, -1, -1)[None, :]) % 3
    b = pref[digits]

    s = np.full(len(b), problem.initial.stored_kwh)
    feasible = np.ones(len(b), dtype=bool)
    step = np.array([deltas[-1], deltas[0], deltas[1]])
    for t in range(T):
        s = quantize_kwh_array(s + step[b[:, t] + 1])
        feasible &= (s >= lo - BOUND_TOLERANCE_KWH) & (s <= hi + BOUND_TOLERANCE_KWH)
        s = np.clip(s, lo, hi)

    f = problem.forecast.values
    net = f[None, :] + b * power

    def right_fold(terms):
        total = np.zeros(len(terms))
        for t in range(T - 1, -1, -1):
            total = terms[:, t] + total
        return total

    if problem.prices is not None:
        secondary = right_fold((net * problem.prices.values[None, :]) * dt)
    else:
        secondary = right_fold(np.abs(b).astype(float))

    if problem.objective == Objective.PEAK:
        peak = net.max(axis=1)
        if problem.peak_floor_kw is not None:
            peak = np.maximum(peak, float(problem.peak_floor_kw))
        best_peak = peak[feasible].min()
        candidates = feasible & (peak == best_peak)
    else:
        candidates = feasible
    masked = np.where(candidates, secondary, np.inf)
    k = int(np.argmin(masked))
    actions = [Action(int(v)) for v in b[k]]
    return DispatchSolution(tuple(actions), _objective_value(problem, actions), _trajectory(problem, actions))
