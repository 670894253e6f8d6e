import numpy as np
import pytest
from datetime import datetime, timezone

from zonempc.errors import MissingChannel, MissingSupplyTemperature, TooShort
from zonempc.features import (
    ACTUATOR_ENERGY,
    ACTUATOR_VALVE,
    ACTUATOR_VALVE_DT,
    ChannelRoles,
    RegressorConfig,
    actuator_input,
    build_regression_rows,
)
from zonempc.timeseries import TimeSeries

T0 = datetime(2021, 6, 1, tzinfo=timezone.utc)


def make_roles():
    return ChannelRoles(output="temp_a", neighbor="temp_b", ambient="t_amb",
                        irradiance="i_hor", valve="valve_a", supply="t_sup",
                        energy="q_a")


def make_series(n=100, const=False):
    rng = np.random.default_rng(1)
    temp = np.full(n, 21.0) if const else 21.0 + rng.normal(0, 0.5, n)
    return TimeSeries(T0, 1800.0, {
        "temp_a": temp,
        "temp_b": np.full(n, 22.0),
        "t_amb": np.full(n, 10.0),
        "i_hor": np.zeros(n),
        "valve_a": np.zeros(n) if const else rng.uniform(0, 1, n),
        "t_sup": np.full(n, 35.0),
        "q_a": np.zeros(n),
    }, {
        "temp_a": "degC", "temp_b": "degC", "t_amb": "degC", "i_hor": "W/m2",
        "valve_a": "frac", "t_sup": "degC", "q_a": "W",
    })


def config(delta=3, tau=9, actuator=ACTUATOR_VALVE):
    return RegressorConfig(delta=delta, tau=tau, actuator_option=actuator,
                           roles=make_roles(), latitude=47.4, longitude=8.5)


def test_row_width_paper_configuration():
    cfg = config(delta=3, tau=9)
    assert cfg.row_width == 52
    X, y = build_regression_rows(make_series(), cfg)
    assert X.shape == (100 - 3 - 1, 52)


def test_row_width_minimal():
    cfg = config(delta=0, tau=1)
    assert cfg.row_width == 5
    X, _ = build_regression_rows(make_series(), cfg)
    assert X.shape[1] == 5


def test_constant_series_rows_identical():
    cfg = config()
    X, y = build_regression_rows(make_series(const=True), cfg)
    assert np.all(y == 21.0)
    assert np.all(X == X[0])


def test_too_short():
    with pytest.raises(TooShort):
        build_regression_rows(make_series(n=4), config(delta=3))


def test_missing_channel():
    ts = make_series()
    bad = ChannelRoles(output="temp_a", neighbor="nope", ambient="t_amb",
                       irradiance="i_hor", valve="valve_a")
    cfg = RegressorConfig(delta=1, tau=2, actuator_option=ACTUATOR_VALVE,
                          roles=bad, latitude=47.4, longitude=8.5)
    with pytest.raises(MissingChannel):
        build_regression_rows(ts, cfg)


def test_actuator_valve_identity():
    assert actuator_input(ACTUATOR_VALVE, 0.5) == 0.5


def test_actuator_valve_dt_heating():
    assert actuator_input(ACTUATOR_VALVE_DT, 1.0, t_sup=35.0, t_bar=22.0) == pytest.approx(13.0)


def test_actuator_valve_dt_cooling_is_negative():
    assert actuator_input(ACTUATOR_VALVE_DT, 1.0, t_sup=18.0, t_bar=24.0) == pytest.approx(-6.0)


def test_actuator_valve_dt_needs_supply():
    with pytest.raises(MissingSupplyTemperature):
        actuator_input(ACTUATOR_VALVE_DT, 1.0)


def test_actuator_energy_passthrough():
    assert actuator_input(ACTUATOR_ENERGY, 0.3, energy=812.0) == 812.0


def test_valve_dt_config_requires_supply_channel():
    roles = ChannelRoles(output="temp_a", neighbor="temp_b", ambient="t_amb",
                         irradiance="i_hor", valve="valve_a")
    with pytest.raises(MissingSupplyTemperature):
        RegressorConfig(delta=1, tau=2, actuator_option=ACTUATOR_VALVE_DT,
                        roles=roles, latitude=47.4, longitude=8.5)
