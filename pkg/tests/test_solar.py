import numpy as np
import pytest
from datetime import datetime, timedelta, timezone

from zonempc.solar import (
    OneHotSolarConfig,
    SOLAR_CONSTANT,
    onehot_encode,
    solar_position,
    vertical_irradiance,
    window_gain,
)

LAT, LON = 47.4, 8.5
EQUINOX = datetime(2020, 3, 20, tzinfo=timezone.utc)


def day_scan(day, minutes=5):
    times = [day + timedelta(minutes=m) for m in range(0, 1440, minutes)]
    geo = [solar_position(t, LAT, LON) for t in times]
    return times, geo


def test_equinox_noon_elevation():
    _, geo = day_scan(EQUINOX)
    peak = max(g.beta for g in geo)
    assert peak == pytest.approx(90.0 - LAT, abs=1.0)


def test_midnight_sun_below_horizon():
    g = solar_position(EQUINOX + timedelta(minutes=30), LAT, LON)
    assert g.beta < 0.0


def test_equinox_sunrise_azimuth_due_east():
    times, geo = day_scan(EQUINOX, minutes=2)
    betas = np.array([g.beta for g in geo])
    rising = np.flatnonzero((betas[:-1] < 0) & (betas[1:] >= 0))
    assert len(rising) == 1
    sunrise = geo[rising[0] + 1]
    assert sunrise.alpha == pytest.approx(90.0, abs=3.0)


def test_vertical_irradiance_cot45():
    assert vertical_irradiance(100.0, 45.0) == pytest.approx(100.0)


def test_vertical_irradiance_guard():
    assert vertical_irradiance(500.0, 2.0) == 0.0


def test_vertical_irradiance_cot30_oracle():
    # independent trig evaluation: 100 / tan(30 deg)
    expected = 100.0 / np.tan(np.deg2rad(30.0))
    assert vertical_irradiance(100.0, 30.0) == pytest.approx(expected, abs=1e-9)
    assert expected == pytest.approx(173.20508075688772)


def test_vertical_irradiance_clamped():
    assert vertical_irradiance(1200.0, 6.0) == SOLAR_CONSTANT


def test_vertical_irradiance_monotone_in_input():
    grid = np.linspace(0.0, 900.0, 200)
    for beta in (5.0, 11.0, 33.0, 78.0):
        values = vertical_irradiance(grid, beta)
        assert np.all(np.diff(values) >= 0.0)
    # continuity: small input change, small output change
    assert abs(vertical_irradiance(100.0, 20.0) - vertical_irradiance(100.0 + 1e-9, 20.0)) < 1e-6


def test_window_gain_sun_behind_window():
    # opposite direction: the clamp zeroes it up to the sine's rounding
    assert window_gain(100.0, 315.0, 45.0, window_area=2.0, orientation_deg=135.0) == pytest.approx(0.0, abs=1e-10)
    # clearly behind the facade: exactly zero
    assert window_gain(100.0, 355.0, 45.0, window_area=2.0, orientation_deg=135.0) == 0.0


def test_window_gain_below_guard():
    assert window_gain(100.0, 135.0 + 90.0, 1.0, window_area=2.0, orientation_deg=135.0) == 0.0


def test_window_gain_hand_value():
    # area 2, normal incidence offset 90 deg, elevation 45: 2 * 1 * cot(45) * 100
    assert window_gain(100.0, 225.0, 45.0, window_area=2.0, orientation_deg=135.0) == pytest.approx(200.0)


def test_onehot_first_bin():
    cfg = OneHotSolarConfig(tau=4)
    vec = onehot_encode(50.0, 3 * 3600.0, cfg)
    assert np.allclose(vec, [50.0, 0.0, 0.0, 0.0])


def test_onehot_second_bin():
    cfg = OneHotSolarConfig(tau=4)
    vec = onehot_encode(80.0, 7 * 3600.0, cfg)
    assert np.allclose(vec, [0.0, 80.0, 0.0, 0.0])


def test_onehot_zero_input():
    cfg = OneHotSolarConfig(tau=4)
    assert np.all(onehot_encode(0.0, 13 * 3600.0, cfg) == 0.0)


def test_onehot_single_nonzero_and_sum():
    cfg = OneHotSolarConfig(tau=9)
    rng = np.random.default_rng(5)
    for _ in range(200):
        iv = float(rng.uniform(0, 900))
        tod = float(rng.uniform(0, 86400))
        vec = onehot_encode(iv, tod, cfg)
        assert (vec != 0).sum() <= 1
        assert vec.sum() == pytest.approx(iv)
