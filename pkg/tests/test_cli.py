import json

import numpy as np
import pytest

from mpcdispatch.cli import GEN_DATA_KEYS, OPTIMIZE_KEYS, SETTINGS, _flag, build_parser, main
from mpcdispatch.core import MARKET_STEP, TimeGrid, TimeSeries
from mpcdispatch.data_io import save_forecast_csv, save_price_csv
from conftest import START

SUBCOMMANDS = ["gen-data", "optimize", "simulate", "sweep", "compare", "forecast-eval"]


@pytest.fixture
def out(tmp_path, monkeypatch):
    monkeypatch.setenv("MPCDISPATCH_OUTPUT_DIR", str(tmp_path / "out"))
    return tmp_path / "out"


def write_example(tmp_path, forecast, prices=None):
    grid = TimeGrid(START, MARKET_STEP, len(forecast))
    save_forecast_csv(tmp_path / "forecast.csv", TimeSeries(grid, np.array(forecast, dtype=float)))
    if prices is not None:
        save_price_csv(tmp_path / "prices.csv", TimeSeries(grid, np.array(prices, dtype=float)))
    return str(tmp_path / "forecast.csv")


def test_gen_data_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["gen-data", "--days", "2", "--seed", "7", "--output-dir", str(tmp_path / name)]) == 0
    for f in ("load.csv", "prices.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert len((tmp_path / "a" / "load.csv").read_text().splitlines()) == 2 * 1440 + 1


def test_gen_data_rejects_zero_days(out):
    assert main(["gen-data", "--days", "0"]) == 1


def test_optimize_example(tmp_path, out, capsys):
    path = write_example(tmp_path, [10, 30, 10, 10])
    code = main(["optimize", "--forecast", path, "--power-kw", "10", "--capacity-kwh", "5",
                 "--initial-kwh", "2.5", "--oracle"])
    assert code == 0
    text = capsys.readouterr().out
    assert "objective (peak): 20.0 kW" in text
    assert "oracle objective (peak): 20.0 kW" in text
    assert "oracle agrees" in text
    rows = (out / "plan.csv").read_text().splitlines()
    assert rows[0] == "timestamp,action,forecast_kw,target_kw,stored_kwh"
    assert [r.split(",")[3] for r in rows[1:]] == ["10.0", "20.0", "10.0", "10.0"]


def test_optimize_spot(tmp_path, out, capsys):
    path = write_example(tmp_path, [10, 10, 10], prices=[1, 5, 1])
    code = main(["optimize", "--forecast", path, "--prices", str(tmp_path / "prices.csv"),
                 "--objective", "spot", "--power-kw", "10", "--capacity-kwh", "2.5"])
    assert code == 0
    assert "objective (spot): 7.5 currency" in capsys.readouterr().out


def test_optimize_spot_without_prices(tmp_path, out):
    path = write_example(tmp_path, [10, 10, 10])
    assert main(["optimize", "--forecast", path, "--objective", "spot"]) == 1


def test_optimize_infeasible(tmp_path, out):
    path = write_example(tmp_path, [10, 10])
    code = main(["optimize", "--forecast", path, "--capacity-kwh", "5", "--reserve-kwh", "4",
                 "--initial-kwh", "1"])
    assert code == 3


def test_missing_file_is_data_error(tmp_path, out):
    assert main(["optimize", "--forecast", str(tmp_path / "nope.csv")]) == 2


def test_unknown_flag_is_usage_error(out):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--bogus"])
    assert exc.value.code == 1


def test_simulate_none(out):
    assert main(["simulate", "--controller", "none", "--days", "2"]) == 0
    report = json.loads((out / "simulate_none.json").read_text())
    assert report["summary"]["mean_peak_reduction_pct"] == 0
    assert all(d["peak_reduction_pct"] == 0 for d in report["days"])


def test_sweep_capacity(out):
    assert main(["sweep", "--capacity", "20,40", "--days", "3"]) == 0
    table = json.loads((out / "sweep.json").read_text())
    assert [r["capacity_kwh"] for r in table] == [20, 40]
    assert table[1]["mean_peak_reduction_pct"] >= table[0]["mean_peak_reduction_pct"]


def test_compare_rows(out):
    assert main(["compare", "--days", "2", "--jobs", "2"]) == 0
    table = json.loads((out / "compare_peak.json").read_text())
    assert [r["controller"] for r in table] == ["optimal", "mpc", "rule", "none"]


def test_forecast_eval(out):
    assert main(["forecast-eval", "--days", "2", "--forecasters", "perfect,seasonal_naive"]) == 0
    table = json.loads((out / "forecast_eval.json").read_text())
    assert all(r["mae_kw"] == 0 for r in table if r["forecaster"] == "perfect")


def test_config_file_and_flag_override(tmp_path, out):
    cfg = tmp_path / "scenario.yaml"
    cfg.write_text("controller:\n  type: none\ndays: 1\nbattery:\n  capacity_kwh: 40\n")
    assert main(["simulate", "--config", str(cfg), "--days", "2"]) == 0
    report = json.loads((out / "simulate_none.json").read_text())
    assert report["summary"]["days"] == 2
    assert report["config"]["battery"]["capacity_kwh"] == 40


def test_unknown_config_key_rejected(tmp_path, out):
    cfg = tmp_path / "scenario.yaml"
    cfg.write_text("battery:\n  colour: red\n")
    assert main(["simulate", "--config", str(cfg)]) == 1


@pytest.mark.parametrize("command", SUBCOMMANDS)
def test_help_lists_flags(command, capsys):
    with pytest.raises(SystemExit) as exc:
        main([command, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    prefixes = {"gen-data": GEN_DATA_KEYS, "optimize": OPTIMIZE_KEYS}.get(command, [""])
    keys = [key for key, _, _ in SETTINGS if any(key.startswith(p) for p in prefixes)]
    assert keys
    for key in keys:
        assert _flag(key) in text
        assert f"[{key}]" in text


def test_flags_are_one_to_one():
    flags = [_flag(key) for key, _, _ in SETTINGS]
    assert len(flags) == len(set(flags))
    build_parser()
