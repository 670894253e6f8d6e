"""Solar geometry, vertical-surface irradiance and the time-binned one-hot
encoding that makes window gains linear in the regression features.

The position algorithm is the abbreviated NOAA/Meeus ephemeris built from the
sun's declination and the local hour angle. Atmospheric refraction is ignored;
the guard angle below removes the near-horizon region anyway.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

import numpy as np

#: elevation (degrees) below which the vertical-surface conversion is zeroed;
#: cot(beta) diverges at sunrise/sunset.
BETA_MIN_DEG = 5.0

#: solar constant used to clamp converted irradiance, W/m^2.
SOLAR_CONSTANT = 1367.0


@dataclass(frozen=True)
class SolarGeometry:
    """Sun position: azimuth ``alpha`` clockwise from north, elevation
    ``beta`` above the horizon, both in degrees."""

    latitude: float
    longitude: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not -90.0 <= self.beta <= 90.0:
            raise ValueError("elevation outside [-90, 90]")
        if not 0.0 <= self.alpha < 360.0:
            raise ValueError("azimuth outside [0, 360)")


def solar_angles(epoch_seconds, latitude: float, longitude: float):
    """Vectorized sun azimuth/elevation in degrees for UTC epoch seconds.

    Parameters
    ----------
    epoch_seconds : array_like
        Seconds since the Unix epoch, UTC.
    latitude, longitude : float
        Site coordinates in degrees (east positive).

    Returns
    -------
    alpha, beta : ndarray
        Azimuth clockwise from north in [0, 360) and elevation in [-90, 90].
    """
    t = np.asarray(epoch_seconds, dtype=float)
    jd = t / 86400.0 + 2440587.5
    jc = (jd - 2451545.0) / 36525.0

    mean_long = np.mod(280.46646 + jc * (36000.76983 + 0.0003032 * jc), 360.0)
    mean_anom = np.deg2rad(357.52911 + jc * (35999.05029 - 0.0001537 * jc))
    ecc = 0.016708634 - jc * (0.000042037 + 0.0000001267 * jc)
    eq_center = (
        np.sin(mean_anom) * (1.914602 - jc * (0.004817 + 0.000014 * jc))
        + np.sin(2 * mean_anom) * (0.019993 - 0.000101 * jc)
        + np.sin(3 * mean_anom) * 0.000289
    )
    true_long = mean_long + eq_center
    omega = np.deg2rad(125.04 - 1934.136 * jc)
    app_long = np.deg2rad(true_long - 0.00569 - 0.00478 * np.sin(omega))

    obliq0 = 23.0 + (26.0 + (21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))) / 60.0) / 60.0
    obliq = np.deg2rad(obliq0 + 0.00256 * np.cos(omega))

    decl = np.arcsin(np.sin(obliq) * np.sin(app_long))

    y = np.tan(obliq / 2.0) ** 2
    ml = np.deg2rad(mean_long)
    eq_time_min = 4.0 * np.rad2deg(
        y * np.sin(2 * ml)
        - 2 * ecc * np.sin(mean_anom)
        + 4 * ecc * y * np.sin(mean_anom) * np.cos(2 * ml)
        - 0.5 * y * y * np.sin(4 * ml)
        - 1.25 * ecc * ecc * np.sin(2 * mean_anom)
    )

    minutes_utc = np.mod(t / 60.0, 1440.0)
    true_solar_min = np.mod(minutes_utc + eq_time_min + 4.0 * longitude, 1440.0)
    hour_angle = true_solar_min / 4.0 - 180.0
    ha = np.deg2rad(hour_angle)

    lat = np.deg2rad(latitude)
    cos_zenith = np.sin(lat) * np.sin(decl) + np.cos(lat) * np.cos(decl) * np.cos(ha)
    cos_zenith = np.clip(cos_zenith, -1.0, 1.0)
    zenith = np.arccos(cos_zenith)
    beta = 90.0 - np.rad2deg(zenith)

    sin_zenith = np.sin(zenith)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos_az = (np.sin(decl) - cos_zenith * np.sin(lat)) / (sin_zenith * np.cos(lat))
    cos_az = np.clip(np.where(np.isfinite(cos_az), cos_az, 1.0), -1.0, 1.0)
    az = np.rad2deg(np.arccos(cos_az))
    alpha = np.mod(np.where(hour_angle > 0, 360.0 - az, az), 360.0)
    return alpha, beta


def solar_position(time: datetime, latitude: float, longitude: float) -> SolarGeometry:
    """Sun position for a single UTC instant."""
    if abs(latitude) > 90.0:
        raise ValueError("latitude outside [-90, 90]")
    alpha, beta = solar_angles(time.timestamp(), latitude, longitude)
    return SolarGeometry(latitude, longitude, float(alpha), float(beta))


def vertical_irradiance(i_hor, beta_deg):
    """Irradiance on a vertical surface tracking the sun: cot(beta) * I_hor.

    Zero below BETA_MIN_DEG (singularity guard) and clamped to the solar
    constant. Accepts scalars or arrays.
    """
    i_hor = np.asarray(i_hor, dtype=float)
    beta = np.asarray(beta_deg, dtype=float)
    rad = np.deg2rad(np.maximum(beta, BETA_MIN_DEG))
    value = i_hor * np.cos(rad) / np.sin(rad)
    value = np.where(beta >= BETA_MIN_DEG, value, 0.0)
    value = np.minimum(value, SOLAR_CONSTANT)
    if value.ndim == 0:
        return float(value)
    return value


def window_gain(i_hor, alpha_deg, beta_deg, window_area: float, orientation_deg: float):
    """Physics ground truth for solar gain through a window, in W.

    ``orientation_deg`` is the outward window normal's azimuth from north.
    Negative incidence (sun behind the facade) contributes nothing.
    """
    if window_area <= 0:
        raise ValueError("window_area must be positive")
    incidence = np.maximum(0.0, np.sin(np.deg2rad(np.asarray(alpha_deg) - orientation_deg)))
    value = window_area * incidence * vertical_irradiance(i_hor, beta_deg)
    if np.ndim(value) == 0:
        return float(value)
    return value


@dataclass(frozen=True)
class OneHotSolarConfig:
    """Equal-length time-of-day bins covering [00:00, 24:00); bin 0 starts at
    midnight."""

    tau: int

    def __post_init__(self):
        if self.tau < 1:
            raise ValueError("tau must be >= 1")

    def bin_of(self, seconds_of_day) -> np.ndarray:
        width = 86400.0 / self.tau
        idx = np.floor(np.mod(np.asarray(seconds_of_day, dtype=float), 86400.0) / width)
        return np.minimum(idx, self.tau - 1).astype(int)


def onehot_encode(i_vert, seconds_of_day, config: OneHotSolarConfig) -> np.ndarray:
    """Spread vertical irradiance over time-of-day bins.

    Scalar inputs give a length-tau vector with at most one nonzero entry;
    array inputs of length n give an (n, tau) matrix.
    """
    i_vert = np.asarray(i_vert, dtype=float)
    bins = config.bin_of(seconds_of_day)
    scalar = i_vert.ndim == 0
    i_flat = np.atleast_1d(i_vert)
    b_flat = np.atleast_1d(bins)
    out = np.zeros((len(i_flat), config.tau))
    out[np.arange(len(i_flat)), b_flat] = i_flat
    return out[0] if scalar else out
