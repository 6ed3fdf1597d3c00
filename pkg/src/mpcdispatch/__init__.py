"""Model-predictive battery dispatch for peak shaving and spot-price load shifting."""

from .core import Action, BatterySpec, BatteryState, TimeGrid, TimeSeries, step_battery
from .optimizer import (
    DispatchProblem,
    DispatchSolution,
    InfeasibleError,
    Objective,
    evaluate_peak,
    evaluate_spot,
    solve_brute_force,
    solve_dp,
)

__all__ = [
    "Action",
    "BatterySpec",
    "BatteryState",
    "DispatchProblem",
    "DispatchSolution",
    "InfeasibleError",
    "Objective",
    "TimeGrid",
    "TimeSeries",
    "evaluate_peak",
    "evaluate_spot",
    "solve_brute_force",
    "solve_dp",
    "step_battery",
]
