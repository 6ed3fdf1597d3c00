"""Command-line entry point: ``mpcdispatch <command> [options]``.

Scenario settings come from an optional YAML/JSON config file, overridden by
flags.  Every config key has exactly one flag (see ``SETTINGS``).

Exit codes: 0 ok, 1 usage, 2 data error, 3 infeasible problem.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields, replace
from datetime import datetime
from pathlib import Path

import jsonschema
import yaml

from . import data_io
from .baseline_rule import RuleConfig
from .controller import ControllerConfig, build_plan
from .core import MARKET_STEP, BatterySpec, BatteryState, TimeGrid
from .data_io import DataError
from .forecasting import (
    InsufficientHistoryError,
    Persistence,
    PerfectOracle,
    SeasonalNaive,
    ExternalFile,
    forecast_error_report,
)
from .optimizer import (
    MAX_BRUTE_FORCE_STEPS,
    DispatchProblem,
    InfeasibleError,
    Objective,
    solve_brute_force,
    solve_dp,
)
from .simulation import (
    COMPARE_ROWS,
    CONTROLLERS,
    FORECASTERS,
    PriceConfig,
    ScenarioConfig,
    comparison_table,
    compare_controllers,
    load_corpus,
    run_scenario,
    run_sweep,
    sweep_table,
    write_report,
    write_table,
)
from .synthetic import DEFAULT_START, StoreProfileConfig, generate_price, generate_synthetic

OUTPUT_ENV = "MPCDISPATCH_OUTPUT_DIR"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE = 0, 1, 2, 3

log = logging.getLogger("mpcdispatch")


class UsageError(Exception):
    pass


# (config key path, type, help).  The flag is the last key component with
# underscores turned into dashes, except where FLAG_NAMES says otherwise.
SETTINGS: list[tuple[str, type, str]] = [
    ("battery.power_kw", float, "battery charge/discharge power (kW)"),
    ("battery.capacity_kwh", float, "battery capacity (kWh)"),
    ("battery.efficiency", float, "charge-side efficiency in (0, 1]"),
    ("battery.reserve_kwh", float, "planning reserve (kWh)"),
    ("controller.type", str, f"controller: {', '.join(CONTROLLERS)}"),
    ("controller.phi", float, "tracking tolerance in [0, 1], as a fraction of battery power"),
    ("controller.replan", str, "replan cadence: step or minute"),
    ("rule.discharge_percentile", float, "rule baseline: discharge above this load percentile"),
    ("rule.charge_percentile", float, "rule baseline: charge below this load percentile"),
    ("rule.lookback_days", int, "rule baseline: days of history for the percentiles"),
    ("forecaster.type", str, f"forecaster: {', '.join(FORECASTERS)}"),
    ("forecaster.path", str, "forecast CSV for the external forecaster"),
    ("data.load_csv", str, "1-min net load CSV (timestamp,net_kw)"),
    ("data.price_csv", str, "spot price CSV (timestamp,eur_per_mwh)"),
    *[
        (f"data.synthetic.{f.name}", f.type if isinstance(f.type, type) else {"float": float, "int": int}[f.type],
         f"synthetic load: {f.name.replace('_', ' ')}")
        for f in fields(StoreProfileConfig)
        if f.name != "rng_seed"
    ],
    ("data.synthetic.price_base", float, "synthetic price level (currency/kWh)"),
    ("data.synthetic.price_amplitude", float, "synthetic diurnal price amplitude (currency/kWh)"),
    ("data.synthetic.spike_prob", float, "synthetic hourly price spike probability"),
    ("objective", str, "optimization objective: peak or spot"),
    ("days", int, "scored days"),
    ("warmup_days", int, "days of history before the first scored day"),
    ("initial_soc", float, "initial state of charge in [0, 1]"),
    ("output_dir", str, f"output directory (default ${OUTPUT_ENV} or ./out)"),
    ("seed", int, "random seed for synthetic data"),
]

FLAG_NAMES = {
    "controller.type": "--controller",
    "forecaster.type": "--forecaster",
    "forecaster.path": "--forecast-path",
}

# Subsets of SETTINGS (by key prefix) accepted by the narrower subcommands.
GEN_DATA_KEYS = ["data.synthetic", "days", "output_dir", "seed"]
OPTIMIZE_KEYS = ["battery", "objective", "output_dir"]

_JSON_TYPES = {float: "number", int: "integer", str: "string"}


def _flag(key: str) -> str:
    return FLAG_NAMES.get(key) or "--" + key.split(".")[-1].replace("_", "-")


def _dest(key: str) -> str:
    return "cfg__" + key.replace(".", "__")


def config_schema() -> dict:
    root: dict = {"type": "object", "properties": {}, "additionalProperties": False}
    for key, typ, _ in SETTINGS:
        node = root
        parts = key.split(".")
        for part in parts[:-1]:
            node = node["properties"].setdefault(
                part, {"type": "object", "properties": {}, "additionalProperties": False}
            )
        node["properties"][parts[-1]] = {"type": _JSON_TYPES[typ]}
    return root


def _flatten(doc: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def load_config_file(path) -> dict:
    """Read and schema-validate a YAML or JSON config; returns flat ``key.path -> value``."""
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"{path}: {exc}") from None
    try:
        jsonschema.validate(doc, config_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise UsageError(f"{path}: invalid config at {where}: {exc.message}") from None
    return _flatten(doc)


def _settings(args) -> dict:
    values = load_config_file(args.config) if getattr(args, "config", None) else {}
    for key, _, _ in SETTINGS:
        v = getattr(args, _dest(key), None)
        if v is not None:
            values[key] = v
    return values


def scenario_from_settings(values: dict) -> ScenarioConfig:
    def pick(prefix):
        return {k[len(prefix):]: v for k, v in values.items() if k.startswith(prefix) and "." not in k[len(prefix):]}

    base = ScenarioConfig()
    battery = replace(base.battery, **pick("battery."))
    ctrl = pick("controller.")
    controller_config = ControllerConfig(
        ctrl.get("phi", base.controller_config.tolerance_phi),
        ctrl.get("replan", base.controller_config.replan_cadence),
    )
    rule = replace(base.rule, **pick("rule."))
    synth = pick("data.synthetic.")
    price_keys = {"price_base": "base", "price_amplitude": "amplitude", "spike_prob": "spike_prob"}
    prices = PriceConfig(**{price_keys[k]: synth.pop(k) for k in list(synth) if k in price_keys})
    store = replace(base.store, **synth)
    forecaster = pick("forecaster.")
    data = pick("data.")
    top = {k: values[k] for k in ("objective", "days", "warmup_days", "initial_soc", "seed") if k in values}
    return ScenarioConfig(
        battery=battery,
        controller=ctrl.get("type", base.controller),
        controller_config=controller_config,
        rule=rule,
        forecaster=forecaster.get("type", base.forecaster),
        forecast_path=forecaster.get("path"),
        load_csv=data.get("load_csv"),
        price_csv=data.get("price_csv"),
        store=store,
        prices=prices,
        **top,
    )


def _output_dir(values: dict) -> Path:
    return Path(values.get("output_dir") or os.environ.get(OUTPUT_ENV) or "out")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_settings(p: argparse.ArgumentParser, keys=None) -> None:
    p.add_argument("--config", help="YAML/JSON scenario config; flags override its keys")
    group = p.add_argument_group("scenario settings (config key in brackets)")
    for key, typ, help_ in SETTINGS:
        if keys is not None and not any(key.startswith(k) for k in keys):
            continue
        group.add_argument(
            _flag(key), dest=_dest(key), type=typ, default=None, metavar=typ.__name__.upper(), help=f"{help_} [{key}]"
        )


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mpcdispatch", description="Battery peak-shaving / spot-price MPC toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write synthetic load and price CSVs")
    _add_settings(p, GEN_DATA_KEYS)
    p.add_argument("--start", default=DEFAULT_START.date().isoformat(), help="first day (YYYY-MM-DD)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("optimize", help="solve one dispatch problem from a forecast CSV")
    p.add_argument("--forecast", required=True, help="forecast CSV (timestamp,net_kw_forecast)")
    p.add_argument("--prices", help="price CSV (timestamp,eur_per_mwh)")
    p.add_argument("--initial-kwh", type=float, default=0.0, help="stored energy at the start (kWh)")
    p.add_argument("--peak-floor-kw", type=float, help="peak already realized in the cost period (kW)")
    p.add_argument("--oracle", action="store_true", help=f"also solve by brute force (<= {MAX_BRUTE_FORCE_STEPS} steps)")
    _add_settings(p, OPTIMIZE_KEYS)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("simulate", help="simulate one scenario")
    p.add_argument("--profile", action="store_true", help="also write the per-minute plot-ready CSV")
    _add_settings(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="sweep battery power, capacity and efficiency")
    p.add_argument("--power", type=_float_list, help="comma-separated powers (kW)")
    p.add_argument("--capacity", type=_float_list, help="comma-separated capacities (kWh)")
    p.add_argument("--efficiency-grid", type=_float_list, help="comma-separated efficiencies")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    _add_settings(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="compare controllers on the same corpus")
    p.add_argument("--controllers", type=_str_list, default=list(COMPARE_ROWS), help="comma-separated rows")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    _add_settings(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("forecast-eval", help="per-day MAE/MAPE of forecasters")
    p.add_argument("--forecasters", type=_str_list, default=["persistence", "seasonal_naive"],
                   help="comma-separated forecasters")
    _add_settings(p)
    p.set_defaults(func=cmd_forecast_eval)
    return parser


def cmd_gen_data(args) -> int:
    values = _settings(args)
    scenario = scenario_from_settings(values)
    days = values.get("days", 30)
    if days < 1:
        raise UsageError(f"--days must be >= 1, got {days}")
    start = datetime.fromisoformat(args.start).replace(tzinfo=DEFAULT_START.tzinfo)
    store = replace(scenario.store, rng_seed=scenario.seed)
    load = generate_synthetic(store, days, start)
    p = scenario.prices
    prices = generate_price(days, p.base, p.amplitude, p.spike_prob, scenario.seed + 1, start)
    out = _output_dir(values)
    data_io.save_power_csv(out / "load.csv", load)
    data_io.save_price_csv(out / "prices.csv", prices)
    print(f"wrote {out / 'load.csv'} ({len(load)} rows) and {out / 'prices.csv'} ({len(prices)} rows)")
    return EXIT_OK


def _battery(values: dict) -> BatterySpec:
    kw = {k.split(".")[1]: v for k, v in values.items() if k.startswith("battery.")}
    return replace(ScenarioConfig().battery, **kw)


def cmd_optimize(args) -> int:
    values = _settings(args)
    objective = Objective(values.get("objective", "peak"))
    if objective == Objective.SPOT and not args.prices:
        raise UsageError("--objective spot requires --prices")
    forecast = data_io.load_forecast_csv(args.forecast)
    prices = None
    if args.prices:
        prices = data_io.load_price_csv(args.prices)
        prices = prices.slice(forecast.start, forecast.end)
    problem = DispatchProblem(
        forecast, _battery(values), BatteryState(args.initial_kwh), objective, prices, args.peak_floor_kw
    )
    solution = solve_dp(problem)
    unit = "kW" if objective == Objective.PEAK else "currency"
    print(f"objective ({objective.value}): {solution.objective_value!r} {unit}")
    if args.oracle:
        oracle = solve_brute_force(problem)
        print(f"oracle objective ({objective.value}): {oracle.objective_value!r} {unit}")
        print("oracle agrees" if oracle.objective_value == solution.objective_value else "ORACLE MISMATCH")
    plan = build_plan(forecast, solution.actions, problem.spec)
    out = _output_dir(values)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "plan.csv"
    with open(path, "w") as fh:
        fh.write("timestamp,action,forecast_kw,target_kw,stored_kwh\n")
        for i, ts in enumerate(forecast.grid.timestamps()):
            fh.write(
                f"{data_io.format_timestamp(ts)},{int(solution.actions[i])},{float(forecast.values[i])!r},"
                f"{float(plan.target_kw.values[i])!r},{solution.state_trajectory[i + 1].stored_kwh!r}\n"
            )
    print(f"wrote {path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    values = _settings(args)
    scenario = scenario_from_settings(values)
    report = run_scenario(scenario, keep_logs=args.profile)
    paths = write_report(report, _output_dir(values), f"simulate_{scenario.controller}")
    s = report.summary()
    print(
        f"{scenario.controller}: {s['days']} days, mean peak reduction "
        f"{s['mean_peak_reduction_pct']:.2f} %, mean cost reduction "
        f"{_fmt(s['mean_cost_reduction_pct'])} %"
    )
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.2f}"


def cmd_sweep(args) -> int:
    values = _settings(args)
    scenario = scenario_from_settings(values)
    cells = run_sweep(scenario, args.power, args.capacity, args.efficiency_grid, jobs=args.jobs)
    table = sweep_table(cells)
    print(f"{'power_kw':>9} {'capacity_kwh':>13} {'efficiency':>10} {'peak_red_%':>11} {'cost_red_%':>11}")
    for row in table:
        if row["error"]:
            print(f"{row['power_kw']:>9g} {row['capacity_kwh']:>13g} {row['efficiency']:>10g}  ERROR {row['error']}")
        else:
            print(
                f"{row['power_kw']:>9g} {row['capacity_kwh']:>13g} {row['efficiency']:>10g} "
                f"{row['mean_peak_reduction_pct']:>11.2f} {_fmt(row['mean_cost_reduction_pct']):>11}"
            )
    for p in write_table(table, _output_dir(values), "sweep"):
        print(f"wrote {p}")
    failed = sum(1 for c in cells if c.error)
    if failed:
        print(f"{failed} of {len(cells)} cells failed", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_compare(args) -> int:
    values = _settings(args)
    scenario = scenario_from_settings(values)
    unknown = [c for c in args.controllers if c not in CONTROLLERS]
    if unknown:
        raise UsageError(f"unknown controller(s) {unknown}; choose from {CONTROLLERS}")
    rows = compare_controllers(scenario, args.controllers, jobs=args.jobs)
    table = comparison_table(rows)
    print(f"objective: {scenario.objective.value}")
    print(f"{'controller':<10} {'peak_red_%':>11} {'cost_red_%':>11}")
    for row in table:
        if row["error"]:
            print(f"{row['controller']:<10} ERROR {row['error']}")
        else:
            print(
                f"{row['controller']:<10} {row['mean_peak_reduction_pct']:>11.2f} "
                f"{_fmt(row['mean_cost_reduction_pct']):>11}"
            )
    for p in write_table(table, _output_dir(values), f"compare_{scenario.objective.value}"):
        print(f"wrote {p}")
    failed = sum(1 for r in rows if r.error)
    if failed:
        print(f"{failed} of {len(rows)} controllers failed", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_forecast_eval(args) -> int:
    values = _settings(args)
    scenario = scenario_from_settings(values)
    corpus = load_corpus(scenario)
    makers = {
        "persistence": Persistence,
        "seasonal_naive": SeasonalNaive,
        "perfect": lambda: PerfectOracle(corpus.load),
        "external": lambda: ExternalFile(scenario.forecast_path),
    }
    unknown = [f for f in args.forecasters if f not in makers]
    if unknown:
        raise UsageError(f"unknown forecaster(s) {unknown}; choose from {sorted(makers)}")
    table = []
    for name in args.forecasters:
        rows = forecast_error_report(makers[name](), corpus.load, skip_days=scenario.warmup_days)
        for r in rows:
            table.append({"forecaster": name, "date": r.date, "mae_kw": r.mae_kw, "mape_pct": r.mape_pct})
        mae = sum(r.mae_kw for r in rows) / len(rows)
        mape = sum(r.mape_pct for r in rows) / len(rows)
        print(f"{name:<15} days={len(rows):<4} MAE={mae:.3f} kW  MAPE={mape:.2f} %")
    for p in write_table(table, _output_dir(values), "forecast_eval"):
        print(f"wrote {p}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"mpcdispatch: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"mpcdispatch: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DataError, InsufficientHistoryError, OSError) as exc:
        print(f"mpcdispatch: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"mpcdispatch: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
