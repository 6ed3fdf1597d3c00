"""Seedable grocery-store net load and spot price surrogates.

The daily load template is: flat night base, linear ramp to a pre-open
peak that holds until opening, a sales-floor plateau until closing, and a
linear evening decline back to the base.  A clear-sky PV bell is
subtracted and AR(1) noise added on top.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from .core import MARKET_STEP, MINUTE, TimeGrid, TimeSeries

DEFAULT_START = datetime(2018, 1, 1, tzinfo=timezone.utc)  # a Monday

RAMP_HOURS = 2.0
PEAK_HOLD_HOURS = 0.5
EVENING_DECLINE_HOURS = 2.0
SUNRISE_HOUR, SUNSET_HOUR = 6.0, 20.0


@dataclass(frozen=True)
class StoreProfileConfig:
    night_base_kw: float = 40.0
    day_plateau_kw: float = 85.0
    preopen_peak_kw: float = 100.0
    open_hour: float = 7.0
    close_hour: float = 21.0
    pv_peak_kw: float = 15.0
    noise_sigma_kw: float = 2.0
    noise_autocorr: float = 0.9
    rng_seed: int = 7
    # Day-to-day variation: plateau and peak heights are scaled down by up to
    # this fraction, per day.  Part of the load noise, so off when
    # noise_sigma_kw is 0.
    day_variation: float = 0.08
    # Sat/Sun scale of the load above the night base.
    weekend_scale: float = 0.8
    # Sunday opening is delayed by this many hours.
    sunday_open_delay_h: float = 2.0

    def __post_init__(self):
        if not self.preopen_peak_kw >= self.day_plateau_kw >= self.night_base_kw > 0:
            raise ValueError(
                "need preopen_peak_kw >= day_plateau_kw >= night_base_kw > 0, got "
                f"{self.preopen_peak_kw}, {self.day_plateau_kw}, {self.night_base_kw}"
            )
        if not 0 <= self.noise_autocorr < 1:
            raise ValueError(f"noise_autocorr must be in [0, 1), got {self.noise_autocorr}")
        if self.noise_sigma_kw < 0 or self.pv_peak_kw < 0:
            raise ValueError("noise_sigma_kw and pv_peak_kw must be non-negative")
        if not 0 <= self.day_variation < 1 or not 0 < self.weekend_scale <= 1:
            raise ValueError("day_variation must be in [0, 1) and weekend_scale in (0, 1]")
        delay = self.sunday_open_delay_h
        if not RAMP_HOURS + PEAK_HOLD_HOURS <= self.open_hour:
            raise ValueError(f"open_hour must leave room for the {RAMP_HOURS} h ramp")
        if not self.open_hour + delay < self.close_hour <= 24 - EVENING_DECLINE_HOURS:
            raise ValueError("need open_hour (+ Sunday delay) < close_hour <= 22")

    def to_dict(self) -> dict:
        return asdict(self)


def daily_template(
    config: StoreProfileConfig,
    scale: float = 1.0,
    open_hour: float | None = None,
) -> np.ndarray:
    """Noise-free, PV-free load for one day at 1-min resolution (1440 values).

    ``scale`` multiplies the load above the night base.
    """
    open_h = config.open_hour if open_hour is None else open_hour
    base = config.night_base_kw
    peak = base + scale * (config.preopen_peak_kw - base)
    plateau = base + scale * (config.day_plateau_kw - base)
    h = np.arange(1440) / 60.0
    ramp_start = open_h - PEAK_HOLD_HOURS - RAMP_HOURS
    hold_start = open_h - PEAK_HOLD_HOURS
    decline_end = config.close_hour + EVENING_DECLINE_HOURS
    out = np.full(1440, base)
    ramp = (h >= ramp_start) & (h < hold_start)
    out[ramp] = base + (peak - base) * (h[ramp] - ramp_start) / RAMP_HOURS
    out[(h >= hold_start) & (h < open_h)] = peak
    out[(h >= open_h) & (h < config.close_hour)] = plateau
    decline = (h >= config.close_hour) & (h < decline_end)
    out[decline] = plateau - (plateau - base) * (h[decline] - config.close_hour) / EVENING_DECLINE_HOURS
    return out


def pv_bell(peak_kw: float) -> np.ndarray:
    h = np.arange(1440) / 60.0
    x = (h - SUNRISE_HOUR) / (SUNSET_HOUR - SUNRISE_HOUR)
    bell = np.where((x > 0) & (x < 1), np.sin(np.pi * np.clip(x, 0, 1)) ** 2, 0.0)
    return peak_kw * bell


def _ar1(rng: np.random.Generator, n: int, sigma: float, rho: float) -> np.ndarray:
    """Stationary AR(1) with marginal std ``sigma``, clipped at 6 sigma."""
    if sigma == 0:
        return np.zeros(n)
    shocks = rng.standard_normal(n)
    innovation = sigma * math.sqrt(1.0 - rho * rho)
    out = np.empty(n)
    x = sigma * shocks[0]
    out[0] = x
    for i in range(1, n):
        x = rho * x + innovation * shocks[i]
        out[i] = x
    return np.clip(out, -6 * sigma, 6 * sigma)


def generate_synthetic(
    config: StoreProfileConfig, days: int, start: datetime = DEFAULT_START
) -> TimeSeries:
    """Minute-resolution net load (kW) for ``days`` whole days."""
    if days < 1:
        raise ValueError(f"days must be >= 1, got {days}")
    rng = np.random.default_rng(config.rng_seed)
    day_scales = 1.0 - config.day_variation * rng.random(days)
    if config.noise_sigma_kw == 0:
        day_scales[:] = 1.0
    pv_scales = rng.uniform(0.3, 1.0, days)
    noise = _ar1(rng, days * 1440, config.noise_sigma_kw, config.noise_autocorr)

    bell = pv_bell(config.pv_peak_kw)
    out = np.empty(days * 1440)
    for d in range(days):
        weekday = (start + timedelta(days=d)).weekday()
        scale = day_scales[d]
        open_h = config.open_hour
        if weekday >= 5:
            scale *= config.weekend_scale
        if weekday == 6:
            open_h += config.sunday_open_delay_h
        load = daily_template(config, scale, open_h)
        out[d * 1440 : (d + 1) * 1440] = load - pv_scales[d] * bell
    out += noise
    np.clip(out, -config.pv_peak_kw, config.preopen_peak_kw + 6 * config.noise_sigma_kw, out=out)
    return TimeSeries(TimeGrid(start, MINUTE, len(out)), out)


def generate_price(
    days: int,
    base: float = 0.05,
    amplitude: float = 0.005,
    spike_prob: float = 0.0,
    rng_seed: int = 7,
    start: datetime = DEFAULT_START,
) -> TimeSeries:
    """Hourly spot prices (currency/kWh) forward-filled to 15-min steps.

    Each hour is ``base + amplitude * (0.8 * diurnal + 0.2 * u)`` with
    ``u ~ U(-1, 1)``, so without spikes every value lies in
    ``[base - amplitude, base + amplitude]``.  A spike, drawn per hour with
    probability ``spike_prob``, adds ``base * U(0.5, 2)``.
    """
    if days < 1:
        raise ValueError(f"days must be >= 1, got {days}")
    if not base > 0 or amplitude < 0 or not 0 <= spike_prob <= 1:
        raise ValueError("need base > 0, amplitude >= 0 and spike_prob in [0, 1]")
    rng = np.random.default_rng(rng_seed)
    n = days * 24
    hour = np.arange(n) % 24
    # Cheapest at 03:00, dearest at 15:00.
    diurnal = -np.cos(2 * np.pi * (hour - 3) / 24)
    jitter = rng.uniform(-1.0, 1.0, n)
    spikes = np.where(rng.random(n) < spike_prob, base * rng.uniform(0.5, 2.0, n), 0.0)
    per_kwh = base + amplitude * (0.8 * diurnal + 0.2 * jitter) + spikes
    # Whole cents per MWh so the CSV round trip is exact.
    per_mwh = np.round(per_kwh * 1000.0, 2)
    values = np.repeat(per_mwh, 4) / 1000.0
    return TimeSeries(TimeGrid(start, MARKET_STEP, len(values)), values)
