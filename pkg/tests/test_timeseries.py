import numpy as np
import pytest

from zonempc.errors import (
    GapTooLarge,
    NonIntegerRatio,
    NonMonotonicTime,
    NotEnoughData,
    SchemaMismatch,
    ValueOutOfRange,
)
from zonempc.timeseries import (
    TimeSeries,
    load_csv,
    resample,
    save_csv,
    split_folds,
)
from datetime import datetime, timezone

T0 = datetime(2021, 1, 1, tzinfo=timezone.utc)


def write(path, lines):
    path.write_text("\n".join(lines) + "\n")


def test_load_constant(tmp_path):
    p = tmp_path / "d.csv"
    write(p, [
        "timestamp,temp_a",
        "2021-01-01T00:00:00Z,21.0",
        "2021-01-01T00:01:00Z,21.0",
        "2021-01-01T00:02:00Z,21.0",
    ])
    ts = load_csv(p, {"temp_a": "degC"})
    assert ts.length == 3
    assert ts.step_seconds == 60.0
    assert np.all(ts.channel("temp_a") == 21.0)


def test_missing_cell_interpolated(tmp_path):
    p = tmp_path / "d.csv"
    write(p, [
        "timestamp,temp_a",
        "2021-01-01T00:00:00Z,20.0",
        "2021-01-01T00:01:00Z,",
        "2021-01-01T00:02:00Z,22.0",
    ])
    ts = load_csv(p, {"temp_a": "degC"})
    assert ts.channel("temp_a")[1] == pytest.approx(21.0)


def test_missing_rows_interpolated(tmp_path):
    p = tmp_path / "d.csv"
    write(p, [
        "timestamp,temp_a",
        "2021-01-01T00:00:00Z,20.0",
        "2021-01-01T00:03:00Z,23.0",
        "2021-01-01T00:04:00Z,24.0",
    ])
    ts = load_csv(p, {"temp_a": "degC"})
    assert ts.length == 5
    assert np.allclose(ts.channel("temp_a"), [20, 21, 22, 23, 24])


def test_gap_too_large(tmp_path):
    p = tmp_path / "d.csv"
    write(p, [
        "timestamp,temp_a",
        "2021-01-01T00:00:00Z,20.0",
        "2021-01-01T00:06:00Z,23.0",  # five samples missing
        "2021-01-01T00:07:00Z,24.0",
    ])
    with pytest.raises(GapTooLarge):
        load_csv(p, {"temp_a": "degC"})


def test_schema_mismatch(tmp_path):
    p = tmp_path / "d.csv"
    write(p, ["timestamp,other", "2021-01-01T00:00:00Z,1", "2021-01-01T00:01:00Z,1"])
    with pytest.raises(SchemaMismatch):
        load_csv(p, {"temp_a": "degC"})


def test_non_monotonic(tmp_path):
    p = tmp_path / "d.csv"
    write(p, [
        "timestamp,temp_a",
        "2021-01-01T00:01:00Z,1",
        "2021-01-01T00:00:00Z,1",
    ])
    with pytest.raises(NonMonotonicTime):
        load_csv(p, {"temp_a": "degC"})


def test_valve_out_of_range(tmp_path):
    p = tmp_path / "d.csv"
    write(p, [
        "timestamp,valve_a",
        "2021-01-01T00:00:00Z,0.5",
        "2021-01-01T00:01:00Z,1.2",
    ])
    with pytest.raises(ValueOutOfRange):
        load_csv(p, {"valve_a": "frac"})


def _series(channels, units, step=60.0, n=None):
    return TimeSeries(T0, step, channels, units)


def test_resample_valve_duty():
    valve = np.zeros(30)
    valve[:2] = 1.0
    ts = _series({"valve_a": valve}, {"valve_a": "frac"})
    out = resample(ts, 1800.0)
    assert out.length == 1
    assert out.channel("valve_a")[0] == pytest.approx(2.0 / 30.0)


def test_resample_constant_mean():
    ts = _series({"temp_a": np.full(120, 21.0)}, {"temp_a": "degC"})
    out = resample(ts, 1800.0)
    assert np.all(out.channel("temp_a") == 21.0)


def test_resample_energy_sums():
    ts = _series({"q_a": np.full(60, 10.0)}, {"q_a": "W"})
    out = resample(ts, 1800.0)
    assert np.allclose(out.channel("q_a"), [300.0, 300.0])


def test_resample_non_integer_ratio():
    ts = _series({"temp_a": np.zeros(10)}, {"temp_a": "degC"})
    with pytest.raises(NonIntegerRatio):
        resample(ts, 90.0)


def test_resample_composes():
    rng = np.random.default_rng(3)
    ts = _series({"temp_a": rng.normal(21, 1, size=720)}, {"temp_a": "degC"})
    once = resample(ts, 60.0 * 6)
    ab = resample(ts, 60.0 * 6 * 5)
    a_then_b = resample(once, 60.0 * 6 * 5)
    assert np.max(np.abs(ab.channel("temp_a") - a_then_b.channel("temp_a"))) < 1e-12


def test_csv_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(8)
    ts = _series(
        {"temp_a": rng.normal(21, 3, size=50), "q_a": np.abs(rng.normal(3, 1, 50))},
        {"temp_a": "degC", "q_a": "W"},
    )
    p = tmp_path / "round.csv"
    save_csv(ts, p)
    back = load_csv(p, dict(ts.units))
    for name in ts.channels:
        assert np.array_equal(ts.channel(name), back.channel(name))
    assert back.start_time == ts.start_time
    assert back.step_seconds == ts.step_seconds


def _weeks(n):
    samples = n * 7 * 48
    return _series({"temp_a": np.zeros(samples)}, {"temp_a": "degC"}, step=1800.0)


def test_split_cardinality():
    split = split_folds(_weeks(10), n_train_folds=1, seed=0)
    assert len(split.train_fold_indices) == 1
    assert len(split.validation_fold_indices) == 9


def test_split_deterministic():
    a = split_folds(_weeks(10), 3, seed=42)
    b = split_folds(_weeks(10), 3, seed=42)
    assert a == b


def test_split_not_enough_data():
    with pytest.raises(NotEnoughData):
        split_folds(_weeks(2), n_train_folds=2, seed=0)


def test_split_coverage_over_seeds():
    ts = _weeks(6)
    seen = set()
    for seed in range(100):
        seen |= split_folds(ts, 2, seed=seed).train_fold_indices
    assert seen == set(range(6))
