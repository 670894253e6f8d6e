"""Uniformly sampled multi-channel time series with CSV I/O, resampling and
weekly fold splitting.

Unit vocabulary and resampling semantics:

==========  ==========================  ====================
unit        meaning                     coarse-step aggregate
==========  ==========================  ====================
``degC``    temperature                 interval mean
``W/m2``    irradiance (>= 0)           interval mean
``frac``    valve position in [0, 1]    duty fraction (mean)
``W``       per-interval energy         interval sum
==========  ==========================  ====================

Energy channels hold the energy accumulated during one sample interval
(numerically equal to mean power in W times the step in minutes for the
1-minute logs the simulator writes), so summing is the correct aggregate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timezone, timedelta

import numpy as np

from .errors import (
    GapTooLarge,
    NonIntegerRatio,
    NonMonotonicTime,
    NotEnoughData,
    SchemaMismatch,
    ValueOutOfRange,
)

MEAN_UNITS = ("degC", "W/m2", "frac")
SUM_UNITS = ("W",)
KNOWN_UNITS = MEAN_UNITS + SUM_UNITS

#: longest run of consecutive missing samples that is repaired by linear
#: interpolation; anything longer invalidates lag features downstream.
MAX_GAP_SAMPLES = 3

WEEK_SECONDS = 7 * 86400.0


def _require_utc(t: datetime) -> datetime:
    if t.tzinfo is None:
        return t.replace(tzinfo=timezone.utc)
    return t.astimezone(timezone.utc)


def format_timestamp(t: datetime) -> str:
    """RFC 3339 UTC timestamp with second resolution."""
    return _require_utc(t).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text).astimezone(timezone.utc)


@dataclass(frozen=True)
class TimeSeries:
    """Immutable record of synchronously sampled channels.

    ``channels`` maps a name to a float64 array; all arrays share one length
    and one sampling grid of ``start_time + k * step_seconds``.
    """

    start_time: datetime
    step_seconds: float
    channels: dict[str, np.ndarray]
    units: dict[str, str]

    def __post_init__(self):
        object.__setattr__(self, "start_time", _require_utc(self.start_time))
        if self.step_seconds <= 0:
            raise ValueError("step_seconds must be positive")
        lengths = {len(v) for v in self.channels.values()}
        if len(lengths) > 1:
            raise ValueError(f"channel lengths differ: {sorted(lengths)}")
        for name in self.channels:
            if name not in self.units:
                raise ValueError(f"channel {name!r} has no unit")
            arr = np.asarray(self.channels[name], dtype=float)
            object.__setattr__(self, "channels", {**self.channels, name: arr})
        frozen = {k: np.asarray(v, dtype=float) for k, v in self.channels.items()}
        for arr in frozen.values():
            arr.setflags(write=False)
        object.__setattr__(self, "channels", frozen)
        self._validate_ranges()

    def _validate_ranges(self):
        for name, arr in self.channels.items():
            if not np.all(np.isfinite(arr)):
                raise ValueOutOfRange(f"channel {name!r} contains non-finite values")
            unit = self.units[name]
            if unit == "frac" and (arr.min(initial=0.0) < -1e-12 or arr.max(initial=0.0) > 1 + 1e-12):
                raise ValueOutOfRange(f"valve channel {name!r} outside [0, 1]")
            if unit == "W/m2" and arr.min(initial=0.0) < -1e-9:
                raise ValueOutOfRange(f"irradiance channel {name!r} is negative")

    @property
    def length(self) -> int:
        return len(next(iter(self.channels.values()))) if self.channels else 0

    @property
    def span_seconds(self) -> float:
        return self.length * self.step_seconds

    def times(self) -> np.ndarray:
        """Epoch seconds (UTC) of every sample."""
        t0 = self.start_time.timestamp()
        return t0 + self.step_seconds * np.arange(self.length)

    def time_at(self, index: int) -> datetime:
        return self.start_time + timedelta(seconds=index * self.step_seconds)

    def channel(self, name: str) -> np.ndarray:
        return self.channels[name]

    def slice(self, start: int, stop: int) -> "TimeSeries":
        """Contiguous sub-series covering sample indices [start, stop)."""
        if not (0 <= start < stop <= self.length):
            raise IndexError(f"slice [{start}, {stop}) outside series of length {self.length}")
        return TimeSeries(
            start_time=self.time_at(start),
            step_seconds=self.step_seconds,
            channels={k: v[start:stop].copy() for k, v in self.channels.items()},
            units=dict(self.units),
        )

    def with_channels(self, extra: dict[str, np.ndarray], units: dict[str, str]) -> "TimeSeries":
        merged = {**{k: v.copy() for k, v in self.channels.items()}, **extra}
        return TimeSeries(self.start_time, self.step_seconds, merged, {**self.units, **units})


def _interpolate_gaps(values: np.ndarray, name: str) -> np.ndarray:
    """Fill NaN runs of at most MAX_GAP_SAMPLES by linear interpolation."""
    out = values.copy()
    isnan = np.isnan(out)
    if not isnan.any():
        return out
    idx = np.flatnonzero(isnan)
    runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
    n = len(out)
    for run in runs:
        lo, hi = run[0] - 1, run[-1] + 1
        if lo < 0 or hi >= n:
            raise GapTooLarge(f"channel {name!r}: missing samples at the series edge")
        if len(run) > MAX_GAP_SAMPLES:
            raise GapTooLarge(
                f"channel {name!r}: gap of {len(run)} samples exceeds the "
                f"{MAX_GAP_SAMPLES}-sample interpolation limit"
            )
        frac = (run - lo) / (hi - lo)
        out[run] = out[lo] + frac * (out[hi] - out[lo])
    return out


def load_csv(path, schema: dict[str, str]) -> TimeSeries:
    """Read a delimited file into a validated TimeSeries.

    The first column must be ``timestamp`` (RFC 3339 UTC); the remaining
    header names must match ``schema`` exactly. Missing rows and empty cells
    are repaired by linear interpolation up to MAX_GAP_SAMPLES consecutive
    samples; longer gaps raise GapTooLarge.
    """
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatch(f"{path}: empty file") from None
        if not header or header[0] != "timestamp":
            raise SchemaMismatch(f"{path}: first column must be 'timestamp'")
        names = header[1:]
        if set(names) != set(schema):
            missing = set(schema) - set(names)
            extra = set(names) - set(schema)
            raise SchemaMismatch(f"{path}: header mismatch (missing={sorted(missing)}, unexpected={sorted(extra)})")
        rows = list(reader)

    if len(rows) < 2:
        raise SchemaMismatch(f"{path}: need at least two data rows")

    stamps = np.array([parse_timestamp(r[0]).timestamp() for r in rows])
    diffs = np.diff(stamps)
    if np.any(diffs <= 0):
        raise NonMonotonicTime(f"{path}: timestamps not strictly increasing")
    step = diffs.min()
    ratios = diffs / step
    if np.any(np.abs(ratios - np.round(ratios)) > 1e-6):
        raise NonMonotonicTime(f"{path}: timestamps are not on a fixed grid")

    n_total = int(round((stamps[-1] - stamps[0]) / step)) + 1
    grid_pos = np.round((stamps - stamps[0]) / step).astype(int)

    raw = {name: np.full(n_total, np.nan) for name in names}
    for r, pos in zip(rows, grid_pos):
        if len(r) != len(names) + 1:
            raise SchemaMismatch(f"{path}: row with {len(r)} fields, expected {len(names) + 1}")
        for j, name in enumerate(names):
            cell = r[j + 1].strip()
            if cell:
                raw[name][pos] = float(cell)

    channels = {name: _interpolate_gaps(raw[name], name) for name in names}
    start = datetime.fromtimestamp(stamps[0], tz=timezone.utc)
    return TimeSeries(start, float(step), channels, {n: schema[n] for n in names})


def save_csv(ts: TimeSeries, path) -> None:
    """Write a TimeSeries in the load_csv format.

    Floats are printed at 17 significant digits so a load round-trip is
    bit-exact.
    """
    names = list(ts.channels)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(["timestamp"] + names) + "\n")
        cols = [ts.channels[n] for n in names]
        t0 = ts.start_time
        step = ts.step_seconds
        for i in range(ts.length):
            stamp = format_timestamp(t0 + timedelta(seconds=i * step))
            fh.write(stamp + "," + ",".join(f"{c[i]:.17g}" for c in cols) + "\n")


def resample(ts: TimeSeries, new_step_seconds: float) -> TimeSeries:
    """Aggregate to a coarser grid; see the module table for per-unit rules.

    A trailing partial interval is dropped.
    """
    ratio = new_step_seconds / ts.step_seconds
    if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
        raise NonIntegerRatio(
            f"new step {new_step_seconds}s is not an integer multiple of {ts.step_seconds}s"
        )
    r = int(round(ratio))
    if r == 1:
        return ts
    n_out = ts.length // r
    if n_out == 0:
        raise NotEnoughData("series shorter than one output interval")
    channels = {}
    for name, arr in ts.channels.items():
        blocks = arr[: n_out * r].reshape(n_out, r)
        if ts.units[name] in SUM_UNITS:
            channels[name] = blocks.sum(axis=1)
        else:
            channels[name] = blocks.mean(axis=1)
    return TimeSeries(ts.start_time, float(new_step_seconds), channels, dict(ts.units))


@dataclass(frozen=True)
class FoldSplit:
    """Disjoint train/validation partition of whole folds."""

    fold_length_seconds: float
    train_fold_indices: frozenset[int]
    validation_fold_indices: frozenset[int]
    seed: int
    n_folds: int = field(default=0)

    def __post_init__(self):
        if self.train_fold_indices & self.validation_fold_indices:
            raise ValueError("train and validation folds overlap")


def n_whole_folds(ts: TimeSeries, fold_length_seconds: float = WEEK_SECONDS) -> int:
    return int(ts.span_seconds // fold_length_seconds)


def fold_slice(ts: TimeSeries, fold_index: int, fold_length_seconds: float = WEEK_SECONDS) -> TimeSeries:
    per = int(round(fold_length_seconds / ts.step_seconds))
    return ts.slice(fold_index * per, (fold_index + 1) * per)


def split_folds(
    ts: TimeSeries,
    n_train_folds: int,
    seed: int,
    fold_length_seconds: float = WEEK_SECONDS,
) -> FoldSplit:
    """Randomly pick ``n_train_folds`` whole folds for training.

    Deterministic under ``seed``; remaining whole folds become validation.
    """
    folds = n_whole_folds(ts, fold_length_seconds)
    if folds < n_train_folds + 1:
        raise NotEnoughData(
            f"series spans {folds} whole folds; need at least {n_train_folds + 1}"
        )
    rng = np.random.default_rng(seed)
    train = rng.choice(folds, size=n_train_folds, replace=False)
    train_set = frozenset(int(i) for i in train)
    val_set = frozenset(range(folds)) - train_set
    return FoldSplit(
        fold_length_seconds=fold_length_seconds,
        train_fold_indices=train_set,
        validation_fold_indices=frozenset(val_set),
        seed=seed,
        n_folds=folds,
    )
