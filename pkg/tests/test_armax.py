import numpy as np
import pytest
from datetime import datetime, timezone

from zonempc import armax
from zonempc.features import (
    ACTUATOR_VALVE,
    RegressorConfig,
    build_regression_rows,
    encode_series,
)
from zonempc.timeseries import TimeSeries

T0 = datetime(2021, 3, 1, tzinfo=timezone.utc)


def small_config(roles, delta=2, tau=3):
    return RegressorConfig(delta=delta, tau=tau, actuator_option=ACTUATOR_VALVE,
                           roles=roles, latitude=47.4, longitude=8.5)


def synthetic_from_theta(cfg, theta, n=600, seed=3):
    """Generate a series whose output follows the lag model exactly."""
    rng = np.random.default_rng(seed)
    channels = {
        "temp_b": 20.0 + rng.uniform(0, 2, n),
        "t_amb": 8.0 + rng.uniform(0, 6, n),
        "i_hor": rng.uniform(0, 500, n),
        "valve_a": rng.uniform(0, 1, n),
        "t_sup": np.full(n, 35.0),
        "q_a": np.zeros(n),
        "temp_a": np.zeros(n),
    }
    units = {"temp_a": "degC", "temp_b": "degC", "t_amb": "degC", "i_hor": "W/m2",
             "valve_a": "frac", "t_sup": "degC", "q_a": "W"}
    ts = TimeSeries(T0, 1800.0, channels, units)
    frames = encode_series(ts, cfg)
    y = np.zeros(n)
    y[: cfg.delta + 1] = 21.0
    p = cfg.delta + 1
    for k in range(cfg.delta, n - 1):
        row = np.concatenate([
            y[k - cfg.delta: k + 1][::-1],
            frames.u[k + 1 - cfg.delta: k + 2][::-1],
            frames.d[k + 1 - cfg.delta: k + 2][::-1].reshape(-1),
        ])
        y[k + 1] = row @ theta
    new_channels = {**{k: v.copy() for k, v in ts.channels.items()}, "temp_a": y}
    return TimeSeries(T0, 1800.0, new_channels, units)


def make_theta(cfg, seed=11):
    rng = np.random.default_rng(seed)
    p = cfg.delta + 1
    theta = np.zeros(cfg.row_width)
    theta[0] = 0.7  # stable autoregression
    theta[1] = 0.1
    theta[p] = 0.5 * rng.uniform(0.5, 1.0)       # drive
    width = 2 + cfg.tau
    theta[2 * p] = 0.15                            # ambient, lag 0
    theta[2 * p + 1] = 0.05                        # neighbor, lag 0
    theta[2 * p + 2] = 1e-3 * rng.uniform(0.5, 1)  # one solar bin
    return theta


def test_recover_known_nonneg_theta(roles_zone1):
    roles = roles_zone1
    roles = roles.__class__(output="temp_a", neighbor="temp_b", ambient="t_amb",
                            irradiance="i_hor", valve="valve_a", supply="t_sup",
                            energy="q_a")
    cfg = small_config(roles)
    theta_true = make_theta(cfg)
    ts = synthetic_from_theta(cfg, theta_true)
    model = armax.fit(ts, cfg, nonneg=True)
    # bins never lit in this draw cannot be identified and stay at zero
    X, _ = build_regression_rows(ts, cfg)
    identifiable = X.std(axis=0) > 1e-9
    err = np.abs(model.theta - theta_true)[identifiable]
    assert err.max() < 1e-6


def test_fifty_two_coefficients(prbs_4w, roles_zone1):
    cfg = RegressorConfig(delta=3, tau=9, actuator_option=ACTUATOR_VALVE,
                          roles=roles_zone1, latitude=47.4, longitude=8.5)
    model = armax.fit(prbs_4w, cfg, nonneg=True)
    assert len(model.theta) == 52
    assert model.nonneg and model.theta.min() >= 0.0


def test_constant_dataset_fixed_point():
    from zonempc.features import ChannelRoles
    roles = ChannelRoles(output="temp_a", neighbor="temp_b", ambient="t_amb",
                         irradiance="i_hor", valve="valve_a", supply="t_sup")
    cfg = small_config(roles)
    n = 200
    ts = TimeSeries(T0, 1800.0, {
        "temp_a": np.full(n, 21.0), "temp_b": np.full(n, 21.0),
        "t_amb": np.full(n, 21.0), "i_hor": np.zeros(n),
        "valve_a": np.zeros(n), "t_sup": np.full(n, 35.0),
    }, {"temp_a": "degC", "temp_b": "degC", "t_amb": "degC", "i_hor": "W/m2",
        "valve_a": "frac", "t_sup": "degC"})
    model = armax.fit(ts, cfg, nonneg=True)
    p = cfg.delta + 1
    assert model.theta_y.sum() == pytest.approx(1.0, abs=1e-8)
    assert np.abs(model.theta[p:]).max() <= 1e-8
    pred, truth = armax.horizon_predictions(model, ts, 2)
    assert np.allclose(pred, 21.0, atol=1e-8)


def test_openloop_zero_steps(prbs_4w, roles_zone1):
    cfg = RegressorConfig(delta=3, tau=9, actuator_option=ACTUATOR_VALVE,
                          roles=roles_zone1, latitude=47.4, longitude=8.5)
    model = armax.fit(prbs_4w, cfg, nonneg=True)
    out = armax.predict_openloop(model, np.zeros(4), np.zeros(10), np.zeros((10, 11)), 0)
    assert out.shape == (0,)


def test_random_walk_model_constant_prediction(roles_zone1):
    cfg = RegressorConfig(delta=1, tau=2, actuator_option=ACTUATOR_VALVE,
                          roles=roles_zone1, latitude=47.4, longitude=8.5)
    theta = np.zeros(cfg.row_width)
    theta[0] = 1.0
    model = armax.ArmaxModel(theta=theta, config=cfg, nonneg=True,
                             stats=armax.TrainingStats(0, 0.0))
    rng = np.random.default_rng(1)
    out = armax.predict_openloop(model, np.array([20.0, 22.5]),
                                 rng.uniform(0, 1, 8), rng.uniform(0, 1, (8, 4)), 5)
    assert np.allclose(out, 22.5)


def test_two_step_equals_composed_one_steps(prbs_4w, roles_zone1):
    cfg = RegressorConfig(delta=3, tau=9, actuator_option=ACTUATOR_VALVE,
                          roles=roles_zone1, latitude=47.4, longitude=8.5)
    model = armax.fit(prbs_4w, cfg, nonneg=True)
    frames = encode_series(prbs_4w, cfg)
    k0 = 100
    y_hist = frames.y[k0 - 3: k0 + 1]
    u = frames.u[k0 - 2: k0 + 3]
    d = frames.d[k0 - 2: k0 + 3]
    two = armax.predict_openloop(model, y_hist, u, d, 2)
    one = armax.predict_openloop(model, y_hist, u[:4], d[:4], 1)
    hist2 = np.concatenate([y_hist[1:], one])
    second = armax.predict_openloop(model, hist2, u[1:], d[1:], 1)
    assert two[1] == pytest.approx(second[0], abs=1e-12)


def test_nonneg_monotone_in_disturbances(prbs_4w, roles_zone1):
    """Raising any disturbance sample never lowers any prediction."""
    cfg = RegressorConfig(delta=3, tau=9, actuator_option=ACTUATOR_VALVE,
                          roles=roles_zone1, latitude=47.4, longitude=8.5)
    model = armax.fit(prbs_4w, cfg, nonneg=True)
    frames = encode_series(prbs_4w, cfg)
    k0, steps = 64, 6
    y_hist = frames.y[k0 - 3: k0 + 1]
    u = frames.u[k0 - 2: k0 + 2 + steps - 1].copy()
    d = frames.d[k0 - 2: k0 + 2 + steps - 1].copy()
    base = armax.predict_openloop(model, y_hist, u, d, steps)
    rng = np.random.default_rng(0)
    for _ in range(40):
        d2 = d.copy()
        i = rng.integers(0, d.shape[0])
        j = rng.integers(0, d.shape[1])
        d2[i, j] += rng.uniform(0.1, 2.0)
        bumped = armax.predict_openloop(model, y_hist, u, d2, steps)
        assert np.all(bumped >= base - 1e-12)
    u2 = u.copy()
    u2[3] += 0.5  # heating drive bump
    bumped = armax.predict_openloop(model, y_hist, u2, d, steps)
    assert np.all(bumped >= base - 1e-12)


def test_serialization_roundtrip(tmp_path, prbs_4w, roles_zone1):
    cfg = RegressorConfig(delta=3, tau=9, actuator_option=ACTUATOR_VALVE,
                          roles=roles_zone1, latitude=47.4, longitude=8.5)
    model = armax.fit(prbs_4w, cfg, nonneg=True)
    path = tmp_path / "m.json"
    model.save(path)
    back = armax.ArmaxModel.load(path)
    assert np.array_equal(back.theta, model.theta)
    assert back.config == model.config
    pred_a, _ = armax.horizon_predictions(model, prbs_4w, 2)
    pred_b, _ = armax.horizon_predictions(back, prbs_4w, 2)
    assert np.array_equal(pred_a, pred_b)
