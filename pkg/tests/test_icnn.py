import numpy as np
import pytest

from zonempc.errors import DimensionMismatch, Diverged
from zonempc.icnn import (
    IcnnArchitecture,
    IcnnDataConfig,
    IcnnZoneModel,
    RolloutWindow,
    TrainConfig,
    forward,
    gradient,
    init_model,
    make_architecture,
    rollout,
    train,
)
from zonempc.features import ACTUATOR_VALVE, ChannelRoles


def zero_model(n_cvx=3, n_ncvx=0, hidden=(6,)):
    arch = IcnnArchitecture(n_cvx=n_cvx, n_ncvx=n_ncvx, hidden=hidden,
                            mode="picnn" if n_ncvx else "ficnn")
    model = init_model(arch, seed=0)
    for w in model.w_x + model.w_z + model.w_v + model.bias:
        w *= 0.0
    return model


def test_zero_network_outputs_zero():
    model = zero_model()
    x = np.array([1.0, -2.0, 3.0])
    assert forward(model, x) == 0.0
    assert np.all(gradient(model, x) == 0.0)


def test_hand_evaluated_single_hidden_unit():
    arch = IcnnArchitecture(n_cvx=1, n_ncvx=0, hidden=(1,), mode="ficnn")
    model = init_model(arch, seed=0)
    model.w_x[0][:] = 1.0   # input into the hidden unit
    model.w_x[1][:] = 0.0   # no direct path to the output
    model.w_z[1][:] = 1.0   # hidden into output
    for b in model.bias:
        b *= 0.0
    assert forward(model, np.array([2.0])) == pytest.approx(2.0)
    # negative side of the rectifier
    assert forward(model, np.array([-2.0])) == pytest.approx(0.0)


def test_linear_network_gradient_is_weight_vector():
    arch = IcnnArchitecture(n_cvx=3, n_ncvx=0, hidden=(), mode="ficnn")
    model = init_model(arch, seed=1)
    g = gradient(model, np.array([0.3, -0.4, 2.0]))
    assert np.allclose(g, model.w_x[0][0])


def random_model(seed, n_cvx=4, n_ncvx=3, mask=(True, True, False, False)):
    arch = IcnnArchitecture(n_cvx=n_cvx, n_ncvx=n_ncvx, hidden=(8, 6),
                            mode="picnn", nonneg_cvx_mask=mask)
    return init_model(arch, seed=seed, weight_scale=0.7)


def test_convexity_probe_single_step():
    rng = np.random.default_rng(12)
    worst = 0.0
    for trial in range(20):
        model = random_model(seed=trial)
        v = rng.normal(size=3)
        for _ in range(50):
            a = rng.normal(scale=2.0, size=4)
            b = rng.normal(scale=2.0, size=4)
            lam = rng.uniform()
            mid = forward(model, lam * a + (1 - lam) * b, v)
            chord = lam * forward(model, a, v) + (1 - lam) * forward(model, b, v)
            worst = max(worst, mid - chord)
    assert worst <= 1e-9


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    model = random_model(seed=5)
    h = 1e-5
    checked = 0
    while checked < 100:
        x = rng.normal(scale=1.5, size=4)
        v = rng.normal(size=3)
        g = gradient(model, x, v)
        fd = np.zeros(4)
        kink = False
        for i in range(4):
            e = np.zeros(4)
            e[i] = h
            f_plus, f_minus = forward(model, x + e, v), forward(model, x - e, v)
            fd[i] = (f_plus - f_minus) / (2 * h)
        # skip near-kink points where the two-sided difference is not the slope
        probe = abs(forward(model, x + 2 * h * np.ones(4), v)
                    + forward(model, x - 2 * h * np.ones(4), v)
                    - 2 * forward(model, x, v))
        if probe > 1e-7:
            kink = True
        if kink:
            continue
        denom = max(1.0, np.abs(fd).max())
        assert np.abs(g - fd).max() / denom < 1e-4
        checked += 1


def test_dimension_mismatch():
    model = random_model(seed=2)
    with pytest.raises(DimensionMismatch):
        forward(model, np.zeros(3), np.zeros(3))
    with pytest.raises(DimensionMismatch):
        forward(model, np.zeros(4), np.zeros(2))
    with pytest.raises(DimensionMismatch):
        forward(model, np.zeros(4))  # context inputs missing


def test_train_learns_rectifier():
    rng = np.random.default_rng(0)
    u = rng.uniform(-2, 2, size=512)
    target = np.maximum(0.0, u)
    arch = IcnnArchitecture(n_cvx=1, n_ncvx=0, hidden=(8,), mode="ficnn")
    model = train(u[:, None], None, target,
                  arch, TrainConfig(step_size=0.05, epochs=300, batch_size=64, seed=1))
    u_val = rng.uniform(-2, 2, size=256)
    pred = forward(model, u_val[:, None])
    mse = float(np.mean((pred - np.maximum(0.0, u_val)) ** 2))
    assert mse <= 1e-3


def test_zero_epochs_keeps_initial_weights():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(64, 2))
    y = rng.normal(size=64)
    arch = IcnnArchitecture(n_cvx=2, n_ncvx=0, hidden=(5,), mode="ficnn")
    trained = train(X, None, y, arch, TrainConfig(step_size=0.05, epochs=0, seed=9))
    fresh = init_model(arch, seed=9)
    for a, b in zip(trained.w_x, fresh.w_x):
        assert np.array_equal(a, b)
    for a, b in zip(trained.w_z[1:], fresh.w_z[1:]):
        assert np.array_equal(a, b)


def test_passthrough_nonnegative_after_training():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(256, 3))
    y = rng.normal(size=256)
    arch = IcnnArchitecture(n_cvx=3, n_ncvx=0, hidden=(6, 6), mode="ficnn",
                            nonneg_cvx_mask=(True, False, False))
    model = train(X, None, y, arch, TrainConfig(step_size=0.05, epochs=20, seed=3))
    for w in model.w_z[1:]:
        assert w.min() >= 0.0
    for w in model.w_x:
        assert w[:, 0].min() >= 0.0


def test_divergence_detected():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(64, 2))
    y = rng.normal(size=64)
    arch = IcnnArchitecture(n_cvx=2, n_ncvx=0, hidden=(6,), mode="ficnn")
    with pytest.raises(Diverged):
        train(X, None, y, arch, TrainConfig(step_size=1e9, epochs=50, seed=0))


def test_monotone_on_allpositive_subclass():
    rng = np.random.default_rng(8)
    arch = IcnnArchitecture(n_cvx=3, n_ncvx=0, hidden=(6, 5), mode="ficnn",
                            nonneg_cvx_mask=(True, True, True))
    model = init_model(arch, seed=21, weight_scale=0.5)
    for w in model.w_x:
        np.abs(w, out=w)
    for _ in range(200):
        x = rng.normal(size=3)
        bump = np.zeros(3)
        bump[rng.integers(0, 3)] = rng.uniform(0.01, 1.0)
        assert forward(model, x + bump) >= forward(model, x) - 1e-12


def zone_model_for_rollout(seed=0):
    roles = ChannelRoles(output="temp_a", neighbor="temp_b", ambient="t_amb",
                         irradiance="i_hor", valve="valve_a", supply="t_sup",
                         energy="q_a")
    cfg = IcnnDataConfig(roles=roles, actuator_option=ACTUATOR_VALVE, n_lag=2,
                         mode="picnn")
    arch = make_architecture(cfg, hidden=(8, 6))
    net = init_model(arch, seed=seed, weight_scale=0.4)
    rng = np.random.default_rng(seed + 50)
    net.x_mean = rng.normal(0, 0.1, arch.n_cvx)
    net.x_scale = rng.uniform(0.5, 2.0, arch.n_cvx)
    net.v_mean = rng.normal(0, 0.1, arch.n_ncvx)
    net.v_scale = rng.uniform(0.5, 2.0, arch.n_ncvx)
    net.y_mean, net.y_scale = 0.01, 0.3
    return IcnnZoneModel(net=net, cfg=cfg)


def make_window(rng, steps):
    return RolloutWindow(
        y_history=21.0 + rng.normal(0, 0.3, 3),
        u_past=rng.uniform(0, 1, 1),
        amb=rng.uniform(0, 15, steps + 1),
        nb=rng.uniform(19, 23, steps + 1),
        ihor=rng.uniform(0, 400, steps + 1),
        origin_time=1.6e9,
        step_seconds=1800.0,
    )


def test_zero_network_rollout_constant():
    model = zone_model_for_rollout()
    for w in model.net.w_x + model.net.w_z + model.net.w_v + model.net.bias:
        w *= 0.0
    model.net.y_mean = 0.0
    rng = np.random.default_rng(0)
    window = make_window(rng, 4)
    levels = rollout(model, window, rng.uniform(0, 1, 4), 4)
    assert np.allclose(levels, window.y_history[-1])


def test_single_step_rollout_equals_forward_plus_anchor():
    model = zone_model_for_rollout(seed=3)
    rng = np.random.default_rng(1)
    window = make_window(rng, 1)
    u = rng.uniform(0, 1, 1)
    levels = rollout(model, window, u, 1)
    x_cvx = np.array([
        window.y_history[2] - window.y_history[1],
        window.y_history[1] - window.y_history[0],
        u[0], window.u_past[0],
    ])
    anchor = window.y_history[-1]
    tod = 2 * np.pi * ((window.origin_time + 1800.0) % 86400.0) / 86400.0
    ctx = np.array([
        window.amb[1] - anchor, window.nb[0] - anchor,
        window.ihor[1], window.ihor[0], np.sin(tod), np.cos(tod),
    ])
    expected = anchor + model.predict_change(x_cvx, ctx)
    assert levels[0] == pytest.approx(expected, abs=1e-12)


def test_recursive_rollout_convex_in_first_input():
    """Composite three-step output stays convex in the first decision."""
    steps = 3
    rng = np.random.default_rng(42)
    worst = 0.0
    for trial in range(10):
        model = zone_model_for_rollout(seed=trial)
        window = make_window(rng, steps)
        u_rest = rng.uniform(0, 1, steps)
        for _ in range(50):
            a, b = rng.uniform(0, 1), rng.uniform(0, 1)
            lam = rng.uniform()
            def levels_for(u0):
                u = u_rest.copy()
                u[0] = u0
                return rollout(model, window, u, steps)
            mid = levels_for(lam * a + (1 - lam) * b)
            chord = lam * levels_for(a) + (1 - lam) * levels_for(b)
            worst = max(worst, float(np.max(mid - chord)))
    assert worst <= 1e-9


def test_rollout_gradient_matches_finite_differences():
    model = zone_model_for_rollout(seed=6)
    rng = np.random.default_rng(9)
    steps = 4
    window = make_window(rng, steps)
    u = rng.uniform(0.2, 0.8, steps)
    levels, jac = rollout(model, window, u, steps, want_gradient=True)
    h = 1e-6
    for j in range(steps):
        e = np.zeros(steps)
        e[j] = h
        plus = rollout(model, window, u + e, steps)
        minus = rollout(model, window, u - e, steps)
        fd = (plus - minus) / (2 * h)
        assert np.abs(jac[:, j] - fd).max() < 1e-5


def test_zone_model_serialization(tmp_path):
    model = zone_model_for_rollout(seed=11)
    path = tmp_path / "net.json"
    model.save(path)
    back = IcnnZoneModel.load(path)
    rng = np.random.default_rng(2)
    x = rng.normal(size=(5, 4))
    v = rng.normal(size=(5, 6))
    assert np.array_equal(model.predict_change(x, v), back.predict_change(x, v))
