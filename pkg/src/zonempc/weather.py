"""Synthetic weather generation: seasonal/diurnal ambient temperature with
AR(1) noise and a clear-sky irradiance envelope scaled by a daily cloudiness
factor."""

from __future__ import annotations

from dataclasses import dataclass, asdict
from datetime import datetime

import numpy as np

from .solar import solar_angles
from .timeseries import TimeSeries


@dataclass(frozen=True)
class ClimateConfig:
    annual_mean_temp: float = 12.0
    seasonal_amplitude: float = 8.0
    diurnal_amplitude: float = 4.0
    noise_std: float = 1.5
    noise_corr_hours: float = 6.0
    cloud_min: float = 0.2
    cloud_max: float = 1.0
    #: day of year with the seasonal minimum
    coldest_doy: float = 15.0
    #: hour of day with the diurnal maximum
    warmest_hour: float = 15.0

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ClimateConfig":
        return ClimateConfig(**d)


def clear_sky_horizontal(beta_deg) -> np.ndarray:
    """Haurwitz-style clear-sky global horizontal irradiance in W/m^2."""
    beta = np.asarray(beta_deg, dtype=float)
    sin_beta = np.sin(np.deg2rad(np.maximum(beta, 0.0)))
    with np.errstate(divide="ignore", over="ignore"):
        value = 1098.0 * sin_beta * np.exp(-0.059 / np.maximum(sin_beta, 1e-9))
    return np.where(beta > 0.0, value, 0.0)


def synth_weather(
    days: int,
    start: datetime,
    seed: int,
    latitude: float,
    longitude: float,
    climate: ClimateConfig | None = None,
    step_seconds: float = 60.0,
) -> TimeSeries:
    """Deterministic weather trace with channels t_amb (degC) and i_hor (W/m2).

    Irradiance is exactly zero whenever the sun is below the horizon.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    climate = climate or ClimateConfig()
    n = int(round(days * 86400 / step_seconds))
    t0 = start.timestamp()
    times = t0 + step_seconds * np.arange(n)

    doy = np.mod(times / 86400.0, 365.25)
    seasonal = -climate.seasonal_amplitude * np.cos(
        2.0 * np.pi * (doy - climate.coldest_doy) / 365.25
    )
    hour = np.mod(times / 3600.0, 24.0)
    diurnal = climate.diurnal_amplitude * np.cos(
        2.0 * np.pi * (hour - climate.warmest_hour) / 24.0
    )

    rng = np.random.default_rng(seed)
    rho = float(np.exp(-step_seconds / (climate.noise_corr_hours * 3600.0)))
    shocks = rng.standard_normal(n) * climate.noise_std * np.sqrt(1.0 - rho * rho)
    noise = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc = rho * acc + shocks[i]
        noise[i] = acc
    t_amb = climate.annual_mean_temp + seasonal + diurnal + noise

    _, beta = solar_angles(times, latitude, longitude)
    clear = clear_sky_horizontal(beta)
    day_index = np.floor((times - t0) / 86400.0).astype(int)
    cloud = rng.uniform(climate.cloud_min, climate.cloud_max, size=days + 1)
    i_hor = clear * cloud[day_index]

    return TimeSeries(
        start_time=start,
        step_seconds=step_seconds,
        channels={"t_amb": t_amb, "i_hor": i_hor},
        units={"t_amb": "degC", "i_hor": "W/m2"},
    )
