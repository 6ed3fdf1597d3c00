"""Replay a multi-day corpus through a controller and score it per cost period.

Controllers:

``none``     battery idle; the reference the reductions are measured against
``mpc``      forecast + optimize + closed-loop tracking
``optimal``  ``mpc`` with a perfect forecast, replanning every market step
``rule``     percentile-threshold baseline

Peaks are the daily maximum of 15-min mean net power.  Battery state
carries over midnight.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import data_io
from .baseline_rule import RuleConfig, run_rule_day
from .controller import ControlLog, ControllerConfig, ReplanCadence, run_control_loop
from .core import (
    COST_PERIOD,
    MARKET_STEP,
    MINUTE,
    BatterySpec,
    BatteryState,
    TimeGrid,
    TimeSeries,
)
from .data_io import DataError, format_timestamp, resample_mean
from .forecasting import ExternalFile, Persistence, PerfectOracle, SeasonalNaive
from .optimizer import Objective
from .synthetic import DEFAULT_START, StoreProfileConfig, generate_price, generate_synthetic

log = logging.getLogger(__name__)

CONTROLLERS = ("none", "mpc", "optimal", "rule")
FORECASTERS = ("seasonal_naive", "persistence", "perfect", "external")
COMPARE_ROWS = ("optimal", "mpc", "rule", "none")


@dataclass(frozen=True)
class PriceConfig:
    base: float = 0.05
    amplitude: float = 0.005
    spike_prob: float = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    battery: BatterySpec = BatterySpec(20.0, 20.0)
    controller: str = "mpc"
    controller_config: ControllerConfig = ControllerConfig()
    rule: RuleConfig = RuleConfig()
    forecaster: str = "seasonal_naive"
    forecast_path: str | None = None
    objective: Objective = Objective.PEAK
    # Either both CSV paths (price optional) or the synthetic generators.
    load_csv: str | None = None
    price_csv: str | None = None
    store: StoreProfileConfig = StoreProfileConfig()
    prices: PriceConfig = PriceConfig()
    days: int = 30  # scored days
    warmup_days: int = 7
    initial_soc: float = 0.5
    seed: int = 7

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective))
        if self.controller not in CONTROLLERS:
            raise ValueError(f"unknown controller {self.controller!r}; choose from {CONTROLLERS}")
        if self.forecaster not in FORECASTERS:
            raise ValueError(f"unknown forecaster {self.forecaster!r}; choose from {FORECASTERS}")
        if self.forecaster == "external" and not self.forecast_path:
            raise ValueError("external forecaster needs forecast_path")
        if self.days < 1 or self.warmup_days < 0:
            raise ValueError("days must be >= 1 and warmup_days >= 0")
        if not 0 <= self.initial_soc <= 1:
            raise ValueError("initial_soc must be in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objective"] = self.objective.value
        d["controller_config"]["replan_cadence"] = self.controller_config.replan_cadence.value
        return d

    def scenario_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Corpus:
    load: TimeSeries  # 1-min net load, whole days
    prices: TimeSeries | None  # currency/kWh at market resolution


def load_corpus(config: ScenarioConfig) -> Corpus:
    if config.load_csv:
        load = data_io.load_power_csv(config.load_csv)
        if load.start.time() != datetime.min.time() or len(load) % 1440:
            raise DataError(f"{config.load_csv}: data must cover whole days starting at midnight")
        prices = None
        if config.price_csv:
            prices = data_io.load_price_csv(config.price_csv)
            if prices.start > load.start or prices.end < load.end:
                raise DataError(f"{config.price_csv}: prices do not cover the load period")
            prices = prices.slice(load.start, load.end)
        return Corpus(load, prices)
    total = config.warmup_days + config.days
    store = replace(config.store, rng_seed=config.seed)
    load = generate_synthetic(store, total)
    p = config.prices
    prices = generate_price(total, p.base, p.amplitude, p.spike_prob, rng_seed=config.seed + 1)
    return Corpus(load, prices)


@dataclass
class DayRecord:
    date: str
    baseline_peak_kw: float
    controlled_peak_kw: float
    peak_reduction_pct: float
    baseline_minute_peak_kw: float
    controlled_minute_peak_kw: float
    baseline_cost: float | None
    controlled_cost: float | None
    cost_reduction_pct: float | None
    min_stored_kwh: float
    max_stored_kwh: float
    charged_kwh: float  # grid energy drawn by the battery
    discharged_kwh: float  # grid energy delivered by the battery
    baseline_energy_kwh: float
    controlled_energy_kwh: float
    failed_replans: int = 0


@dataclass
class SimulationReport:
    scenario_hash: str
    config: dict
    days: list[DayRecord]
    logs: list[ControlLog] | None = field(default=None, repr=False, compare=False)

    @property
    def mean_peak_reduction_pct(self) -> float:
        return float(np.mean([d.peak_reduction_pct for d in self.days]))

    @property
    def mean_cost_reduction_pct(self) -> float | None:
        vals = [d.cost_reduction_pct for d in self.days]
        if any(v is None for v in vals):
            return None
        return float(np.mean(vals))

    def summary(self) -> dict:
        return {
            "days": len(self.days),
            "mean_peak_reduction_pct": self.mean_peak_reduction_pct,
            "mean_cost_reduction_pct": self.mean_cost_reduction_pct,
            "mean_baseline_peak_kw": float(np.mean([d.baseline_peak_kw for d in self.days])),
            "mean_controlled_peak_kw": float(np.mean([d.controlled_peak_kw for d in self.days])),
        }

    def to_dict(self) -> dict:
        return {
            "scenario_hash": self.scenario_hash,
            "config": self.config,
            "summary": self.summary(),
            "days": [asdict(d) for d in self.days],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _pct(before: float, after: float) -> float:
    if before == 0:
        return 0.0
    return 100.0 * (before - after) / before


def score_day(log_: ControlLog, prices: TimeSeries | None) -> DayRecord:
    per_step = MARKET_STEP // MINUTE
    baseline = log_.baseline_kw
    controlled = log_.realized_kw
    base_peak = float(baseline.reshape(-1, per_step).mean(axis=1).max())
    ctrl_peak = float(controlled.reshape(-1, per_step).mean(axis=1).max())
    battery = controlled - baseline
    minute_h = 1 / 60
    base_cost = ctrl_cost = cost_pct = None
    if prices is not None:
        per_minute = np.repeat(prices.values, per_step)
        base_cost = float(np.sum(baseline * per_minute) * minute_h)
        ctrl_cost = float(np.sum(controlled * per_minute) * minute_h)
        cost_pct = _pct(base_cost, ctrl_cost)
    return DayRecord(
        date=log_.grid.start.date().isoformat(),
        baseline_peak_kw=base_peak,
        controlled_peak_kw=ctrl_peak,
        peak_reduction_pct=_pct(base_peak, ctrl_peak),
        baseline_minute_peak_kw=float(baseline.max()),
        controlled_minute_peak_kw=float(controlled.max()),
        baseline_cost=base_cost,
        controlled_cost=ctrl_cost,
        cost_reduction_pct=cost_pct,
        min_stored_kwh=float(log_.stored_kwh.min()),
        max_stored_kwh=float(log_.stored_kwh.max()),
        charged_kwh=float(np.sum(np.where(battery > 0, battery, 0.0)) * minute_h),
        discharged_kwh=float(-np.sum(np.where(battery < 0, battery, 0.0)) * minute_h),
        baseline_energy_kwh=float(np.sum(baseline) * minute_h),
        controlled_energy_kwh=float(np.sum(controlled) * minute_h),
        failed_replans=log_.failed_replans,
    )


def _idle_day(day: TimeSeries, state: BatteryState) -> ControlLog:
    n = len(day)
    return ControlLog(
        grid=day.grid,
        baseline_kw=np.array(day.values),
        actions=np.zeros(n, dtype=np.int8),
        stored_kwh=np.full(n, state.stored_kwh),
        target_kw=np.full(n, np.nan),
        realized_kw=np.array(day.values),
        delta_p_kw=np.full(n, np.nan),
        final_state=state,
        planned_actions=np.zeros(n // (MARKET_STEP // MINUTE), dtype=np.int8),
    )


def _make_forecaster(config: ScenarioConfig, corpus: Corpus):
    if config.controller == "optimal" or config.forecaster == "perfect":
        return PerfectOracle(corpus.load)
    if config.forecaster == "persistence":
        return Persistence()
    if config.forecaster == "external":
        return ExternalFile(config.forecast_path)
    return SeasonalNaive()


def run_scenario(
    config: ScenarioConfig, corpus: Corpus | None = None, keep_logs: bool = False
) -> SimulationReport:
    """Simulate every scored day of the corpus and score it."""
    if corpus is None:
        corpus = load_corpus(config)
    load = corpus.load
    total_days = len(load) // 1440
    warmup = config.warmup_days
    if total_days <= warmup:
        raise DataError(f"corpus has {total_days} day(s), need more than {warmup} warm-up days")
    scored = min(config.days, total_days - warmup)

    forecaster = _make_forecaster(config, corpus)
    needed = 0
    if config.controller == "mpc":
        needed = forecaster.history_days
    elif config.controller == "rule":
        needed = config.rule.lookback_days
    if warmup < needed:
        raise ValueError(f"{config.controller} needs {needed} warm-up day(s), got {warmup}")
    if config.objective == Objective.SPOT and corpus.prices is None:
        raise ValueError("spot objective requires prices")

    spec = config.battery
    controller_config = config.controller_config
    if config.controller == "optimal":
        controller_config = replace(controller_config, replan_cadence=ReplanCadence.EVERY_MARKET_STEP)
    state = BatteryState(config.initial_soc * spec.capacity_kwh)
    if state.stored_kwh < spec.reserve_kwh:
        state = BatteryState(spec.reserve_kwh)
    history_days = max(needed, 1)

    days, logs = [], []
    for d in range(warmup, warmup + scored):
        start = load.grid.timestamp(d * 1440)
        day = load.slice(start, start + COST_PERIOD)
        day_prices = None
        if corpus.prices is not None:
            day_prices = corpus.prices.slice(start, start + COST_PERIOD)
        hist_start = max(load.start, start - history_days * COST_PERIOD)
        history = load.slice(hist_start, start)
        planner_prices = day_prices if config.objective == Objective.SPOT else None

        if config.controller == "none":
            log_ = _idle_day(day, state)
        elif config.controller == "rule":
            price_history = None
            if corpus.prices is not None and config.objective == Objective.SPOT:
                price_history = corpus.prices.slice(
                    max(corpus.prices.start, start - config.rule.lookback_days * COST_PERIOD), start
                )
            log_ = run_rule_day(
                day, history, spec, state, config.rule, config.objective, day_prices, price_history
            )
        else:
            log_ = run_control_loop(
                day, history, forecaster, spec, state, controller_config, config.objective, planner_prices
            )
        state = log_.final_state
        days.append(score_day(log_, day_prices))
        if keep_logs:
            logs.append(log_)
    return SimulationReport(config.scenario_hash(), config.to_dict(), days, logs if keep_logs else None)


def _run(config: ScenarioConfig) -> SimulationReport:
    return run_scenario(config)


def _map(configs: Sequence[ScenarioConfig], jobs: int) -> list:
    """Run scenarios, returning a report or the raised exception per config."""
    results: list = []
    if jobs <= 1:
        for c in configs:
            try:
                results.append(_run(c))
            except Exception as exc:  # a failed cell must not stop the others
                log.error("scenario %s failed: %s", c.scenario_hash(), exc)
                results.append(exc)
        return results
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run, c) for c in configs]
        for c, fut in zip(configs, futures):
            try:
                results.append(fut.result())
            except Exception as exc:
                log.error("scenario %s failed: %s", c.scenario_hash(), exc)
                results.append(exc)
    return results


@dataclass
class SweepCell:
    power_kw: float
    capacity_kwh: float
    efficiency: float
    report: SimulationReport | None
    error: str | None = None


def run_sweep(
    base: ScenarioConfig,
    powers: Iterable[float] | None = None,
    capacities: Iterable[float] | None = None,
    efficiencies: Iterable[float] | None = None,
    jobs: int = 1,
) -> list[SweepCell]:
    """Cartesian product of battery parameters; failed cells carry their error."""
    powers = list(powers or [base.battery.power_kw])
    capacities = list(capacities or [base.battery.capacity_kwh])
    efficiencies = list(efficiencies or [base.battery.efficiency])
    grid = [(p, c, e) for p in powers for c in capacities for e in efficiencies]
    configs, cells = [], []
    for p, c, e in grid:
        try:
            spec = replace(base.battery, power_kw=p, capacity_kwh=c, efficiency=e)
            configs.append(replace(base, battery=spec))
        except ValueError as exc:
            configs.append(None)
            cells.append(SweepCell(p, c, e, None, str(exc)))
            continue
        cells.append(None)
    runnable = [c for c in configs if c is not None]
    outcomes = iter(_map(runnable, jobs))
    out = []
    for (p, c, e), cfg, cell in zip(grid, configs, cells):
        if cfg is None:
            out.append(cell)
            continue
        result = next(outcomes)
        if isinstance(result, Exception):
            out.append(SweepCell(p, c, e, None, f"{type(result).__name__}: {result}"))
        else:
            out.append(SweepCell(p, c, e, result))
    return out


@dataclass
class ComparisonRow:
    controller: str
    report: SimulationReport | None
    error: str | None = None


def compare_controllers(
    config: ScenarioConfig, controllers: Sequence[str] = COMPARE_ROWS, jobs: int = 1
) -> list[ComparisonRow]:
    """Same corpus and battery for every row; ``optimal`` uses a perfect forecast."""
    configs = [replace(config, controller=name) for name in controllers]
    results = _map(configs, jobs)
    rows = []
    for name, result in zip(controllers, results):
        if isinstance(result, Exception):
            rows.append(ComparisonRow(name, None, f"{type(result).__name__}: {result}"))
        else:
            rows.append(ComparisonRow(name, result))
    return rows


# ---------------------------------------------------------------- outputs

DAY_FIELDS = [f for f in DayRecord.__dataclass_fields__]


def write_report(report: SimulationReport, out_dir, stem: str = "report") -> list[Path]:
    """JSON report, flat per-day CSV and, if logs were kept, plot-ready minute CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{stem}.json", out / f"{stem}_days.csv"]
    paths[0].write_text(report.to_json())
    with open(paths[1], "w") as fh:
        fh.write(",".join(DAY_FIELDS) + "\n")
        for d in report.days:
            fh.write(",".join(_cell(getattr(d, f)) for f in DAY_FIELDS) + "\n")
    if report.logs:
        paths.append(out / f"{stem}_profile.csv")
        write_action_log(report.logs, paths[-1])
    return paths


def write_action_log(logs: Sequence[ControlLog], path) -> None:
    """Minute log: ``timestamp,action,stored_kwh,target_kw,realized_kw,delta_p_kw,baseline_kw``."""
    with open(path, "w") as fh:
        fh.write("timestamp,action,stored_kwh,target_kw,realized_kw,delta_p_kw,baseline_kw\n")
        for lg in logs:
            for i, ts in enumerate(lg.grid.timestamps()):
                fh.write(
                    f"{format_timestamp(ts)},{int(lg.actions[i])},{_cell(lg.stored_kwh[i])},"
                    f"{_cell(lg.target_kw[i])},{_cell(lg.realized_kw[i])},"
                    f"{_cell(lg.delta_p_kw[i])},{_cell(lg.baseline_kw[i])}\n"
                )


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def comparison_table(rows: Sequence[ComparisonRow]) -> list[dict]:
    table = []
    for r in rows:
        entry = {"controller": r.controller, "error": r.error}
        if r.report is not None:
            entry.update(r.report.summary())
            entry["scenario_hash"] = r.report.scenario_hash
        table.append(entry)
    return table


def sweep_table(cells: Sequence[SweepCell]) -> list[dict]:
    table = []
    for c in cells:
        entry = {
            "power_kw": c.power_kw,
            "capacity_kwh": c.capacity_kwh,
            "efficiency": c.efficiency,
            "error": c.error,
        }
        if c.report is not None:
            entry.update(c.report.summary())
            entry["scenario_hash"] = c.report.scenario_hash
        table.append(entry)
    return table


def write_table(table: Sequence[dict], out_dir, stem: str) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path, csv_path = out / f"{stem}.json", out / f"{stem}.csv"
    json_path.write_text(json.dumps(list(table), indent=2, sort_keys=True) + "\n")
    keys: list[str] = []
    for row in table:
        keys.extend(k for k in row if k not in keys)
    with open(csv_path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for row in table:
            fh.write(",".join(_cell(row.get(k)) for k in keys) + "\n")
    return [json_path, csv_path]
