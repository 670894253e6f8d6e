import numpy as np
import pytest
from datetime import datetime, timezone

from zonempc.errors import FeatureDimensionMismatch, NotEnoughData
from zonempc.features import ACTUATOR_ENERGY, ACTUATOR_VALVE, ChannelRoles, ml_series_arrays
from zonempc.forest import (
    ForestDataConfig,
    ForestHyper,
    ForestModel,
    ForestModelSet,
    StepFeatureSpec,
    _Tree,
    fit_horizon,
    fit_step_model,
    step_design,
)
from zonempc.timeseries import TimeSeries

T0 = datetime(2021, 5, 1, tzinfo=timezone.utc)


def toy_roles():
    return ChannelRoles(output="temp_a", neighbor="temp_b", ambient="t_amb",
                        irradiance="i_hor", valve="valve_a", supply="t_sup",
                        energy="q_a")


def toy_series(n=1200, slope=2.0, noise=0.01, seed=0):
    """Temperature whose per-step change is slope * valve + tiny noise; the
    disturbances carry no information."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(0, 1, n)
    dy = np.zeros(n)
    dy[1:] = slope * u[1:] + rng.normal(0, noise, n - 1)
    y = 21.0 + np.cumsum(dy) - dy[0]
    y -= y.mean() - 21.0
    return TimeSeries(T0, 1800.0, {
        "temp_a": y, "temp_b": np.full(n, 21.0), "t_amb": rng.uniform(5, 15, n),
        "i_hor": rng.uniform(0, 300, n), "valve_a": u, "t_sup": np.full(n, 35.0),
        "q_a": np.zeros(n),
    }, {"temp_a": "degC", "temp_b": "degC", "t_amb": "degC", "i_hor": "W/m2",
        "valve_a": "frac", "t_sup": "degC", "q_a": "W"})


def toy_cfg():
    return ForestDataConfig(roles=toy_roles(), actuator_option=ACTUATOR_VALVE, n_lag=2)


def test_known_generating_slope():
    ts = toy_series()
    cfg = toy_cfg()
    spec = StepFeatureSpec(k=1, n_lag=2)
    model = fit_step_model(ts, spec, ForestHyper(n_trees=20, min_samples_leaf=100, seed=4), cfg)
    # the valve of the target interval is the last x_c feature (offset k)
    col = spec.u_offsets.index(1)
    for tree in model.trees:
        assert np.all(np.abs(tree.leaf_w[:, col] - 2.0) < 0.05)


def test_single_leaf_equals_global_ols():
    ts = toy_series(n=600)
    cfg = toy_cfg()
    spec = StepFeatureSpec(k=1, n_lag=2)
    arrays = ml_series_arrays(ts, cfg.roles, cfg.actuator_option)
    X_d, X_c, y = step_design(arrays, spec)
    hyper = ForestHyper(n_trees=3, min_samples_leaf=len(y), seed=1)
    model = fit_step_model(ts, spec, hyper, cfg)
    for tree in model.trees:
        assert len(tree.leaf_b) == 1


def test_deterministic_under_seed():
    ts = toy_series(n=800)
    cfg = toy_cfg()
    spec = StepFeatureSpec(k=1, n_lag=2)
    hyper = ForestHyper(n_trees=8, min_samples_leaf=80, seed=9)
    a = fit_step_model(ts, spec, hyper, cfg)
    b = fit_step_model(ts, spec, hyper, cfg)
    arrays = ml_series_arrays(ts, cfg.roles, cfg.actuator_option)
    X_d, X_c, _ = step_design(arrays, spec)
    assert np.array_equal(a.predict(X_d, X_c), b.predict(X_d, X_c))


def test_not_enough_data():
    ts = toy_series(n=60)
    with pytest.raises(NotEnoughData):
        fit_step_model(ts, StepFeatureSpec(k=1, n_lag=2),
                       ForestHyper(n_trees=2, min_samples_leaf=500), toy_cfg())


def manual_model(leaf_maps, spec):
    """Forest with one single-leaf tree per (w, b) pair."""
    trees = []
    for w, b in leaf_maps:
        trees.append(_Tree(
            feature=np.array([-1]), threshold=np.array([0.0]),
            left=np.array([-1]), right=np.array([-1]), leaf_id=np.array([0]),
            leaf_w=np.array([w]), leaf_b=np.array([b]), leaf_n=np.array([1000]),
        ))
    return ForestModel(spec=spec, hyper=ForestHyper(n_trees=len(trees)), trees=trees)


def test_single_leaf_affine_evaluation():
    spec = StepFeatureSpec(k=1, n_lag=1)
    # weight 0.5 on the decision interval's drive, map 0.5 u + 0.1
    model = manual_model([(np.array([0.0, 0.5]), 0.1)], spec)
    x_d = np.zeros(spec.xd_width)
    assert model.predict(x_d, np.array([0.0, 1.0])) == pytest.approx(0.6)


def test_zero_input_gives_mean_intercept():
    spec = StepFeatureSpec(k=1, n_lag=1)
    model = manual_model([(np.array([1.0, 1.0]), 0.2), (np.array([2.0, 0.5]), 0.6)], spec)
    x_d = np.zeros(spec.xd_width)
    assert model.predict(x_d, np.zeros(2)) == pytest.approx(0.4)


def test_two_tree_average():
    spec = StepFeatureSpec(k=1, n_lag=1)
    model = manual_model([(np.array([0.0, 1.0]), 0.0), (np.array([0.0, 3.0]), 2.0)], spec)
    w, b = model.extract_affine(np.zeros(spec.xd_width))
    assert np.allclose(w, [0.0, 2.0]) and b == pytest.approx(1.0)


def test_predict_equals_extraction_exactly():
    ts = toy_series(n=900, seed=5)
    cfg = toy_cfg()
    spec = StepFeatureSpec(k=2, n_lag=2)
    model = fit_step_model(ts, spec, ForestHyper(n_trees=12, min_samples_leaf=60, seed=2), cfg)
    arrays = ml_series_arrays(ts, cfg.roles, cfg.actuator_option)
    X_d, X_c, _ = step_design(arrays, spec)
    rng = np.random.default_rng(3)
    for i in rng.integers(0, len(X_d), size=100):
        w, b = model.extract_affine(X_d[i])
        assert model.predict(X_d[i], X_c[i]) == float(np.dot(w, X_c[i]) + b)


def test_feature_dimension_mismatch():
    spec = StepFeatureSpec(k=1, n_lag=1)
    model = manual_model([(np.array([0.0, 0.5]), 0.1)], spec)
    with pytest.raises(FeatureDimensionMismatch):
        model.predict(np.zeros(spec.xd_width + 1), np.array([0.0, 1.0]))
    with pytest.raises(FeatureDimensionMismatch):
        model.predict(np.zeros(spec.xd_width), np.array([1.0, 2.0, 3.0]))


def test_horizon_structure():
    # at step 1 the window still touches measured outputs, at step 2 only the
    # origin's own change remains, beyond that none: no predicted feedback
    s1, s2, s3 = (StepFeatureSpec(k=k, n_lag=2) for k in (1, 2, 3))
    assert s1.measured_offsets == (-1, 0)
    assert s2.measured_offsets == (0,)
    assert s3.measured_offsets == ()
    assert all(j <= 0 for s in (s1, s2, s3) for j in s.measured_offsets)
    # decision window grows with the step
    assert s1.u_offsets == (-1, 0, 1)
    assert s2.u_offsets == (-1, 0, 1, 2)


def test_horizon_common_row_count():
    ts = toy_series(n=700)
    cfg = toy_cfg()
    fs = fit_horizon(ts, 3, ForestHyper(n_trees=2, min_samples_leaf=60, seed=0), cfg)
    arrays = ml_series_arrays(ts, cfg.roles, cfg.actuator_option)
    counts = {k: len(step_design(arrays, fs.models[k].spec, max_step=3)[2]) for k in (1, 2, 3)}
    assert len(set(counts.values())) == 1


def test_min_samples_leaf_audit():
    ts = toy_series(n=1000, seed=8)
    cfg = toy_cfg()
    hyper = ForestHyper(n_trees=10, min_samples_leaf=90, seed=3)
    model = fit_step_model(ts, StepFeatureSpec(k=1, n_lag=2), hyper, cfg)
    for tree in model.trees:
        assert np.all(tree.leaf_n >= hyper.min_samples_leaf)


def test_zero_weight_features_do_not_matter():
    spec = StepFeatureSpec(k=1, n_lag=1)
    model = manual_model([(np.array([0.4, 0.0]), 0.3)], spec)
    x_d = np.zeros(spec.xd_width)
    assert model.predict(x_d, np.array([0.2, 0.1])) == model.predict(x_d, np.array([0.2, 0.9]))


def test_serialization_roundtrip(tmp_path):
    ts = toy_series(n=900)
    cfg = toy_cfg()
    fs = fit_horizon(ts, 2, ForestHyper(n_trees=5, min_samples_leaf=80, seed=7), cfg)
    fs.save(tmp_path / "rf.json", tmp_path / "rf.npz")
    back = ForestModelSet.load(tmp_path / "rf.json")
    p1, t1 = fs.horizon_predictions(ts, 2)
    p2, t2 = back.horizon_predictions(ts, 2)
    assert np.array_equal(p1, p2)
    assert np.array_equal(t1, t2)
