"""Lagged linear zone model identified with (optionally) non-negative least
squares, plus recursive open-loop prediction."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import TooShort
from .features import FeatureFrames, RegressorConfig, build_regression_rows, encode_series
from .nnls import nnls
from .timeseries import TimeSeries


@dataclass(frozen=True)
class TrainingStats:
    rows: int
    residual_norm: float


@dataclass(frozen=True)
class ArmaxModel:
    """Coefficient vector over [y lags | u lags | d lags] per the regressor
    layout; when ``nonneg`` every coefficient is >= 0."""

    theta: np.ndarray
    config: RegressorConfig
    nonneg: bool
    stats: TrainingStats

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if len(theta) != self.config.row_width:
            raise ValueError(
                f"theta has {len(theta)} entries, layout needs {self.config.row_width}"
            )
        if self.nonneg and theta.min(initial=0.0) < 0.0:
            raise ValueError("nonneg model with negative coefficient")
        object.__setattr__(self, "theta", theta)

    # --- coefficient views -------------------------------------------------
    @property
    def theta_y(self) -> np.ndarray:
        return self.theta[: self.config.delta + 1]

    @property
    def theta_u(self) -> np.ndarray:
        p = self.config.delta + 1
        return self.theta[p: 2 * p]

    def theta_d(self, lag: int) -> np.ndarray:
        p = self.config.delta + 1
        width = 2 + self.config.tau
        base = 2 * p + lag * width
        return self.theta[base: base + width]

    # --- persistence -------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "kind": "armax",
            "config": self.config.to_dict(),
            "nonneg": self.nonneg,
            "theta": self.theta.tolist(),
            "stats": {"rows": self.stats.rows, "residual_norm": self.stats.residual_norm},
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def from_dict(doc: dict) -> "ArmaxModel":
        return ArmaxModel(
            theta=np.asarray(doc["theta"], dtype=float),
            config=RegressorConfig.from_dict(doc["config"]),
            nonneg=doc["nonneg"],
            stats=TrainingStats(doc["stats"]["rows"], doc["stats"]["residual_norm"]),
        )

    @staticmethod
    def load(path) -> "ArmaxModel":
        with open(path) as fh:
            return ArmaxModel.from_dict(json.load(fh))


def _stack_training_rows(data, config) -> tuple[np.ndarray, np.ndarray]:
    series = [data] if isinstance(data, TimeSeries) else list(data)
    xs, ys = [], []
    for ts in series:
        X, y = build_regression_rows(ts, config)
        xs.append(X)
        ys.append(y)
    return np.vstack(xs), np.concatenate(ys)


def fit(data, config: RegressorConfig, nonneg: bool = True) -> ArmaxModel:
    """Identify coefficients from one series or a list of fold series.

    Columns are scaled to unit root-mean-square before the solve (scales are
    positive, so the sign constraint carries over) and coefficients are
    unscaled afterward. Columns that are identically zero in the training
    data, e.g. solar bins never observed, keep a zero coefficient.
    """
    X, y = _stack_training_rows(data, config)
    scale = np.sqrt(np.mean(X * X, axis=0))
    scale[scale < 1e-12] = 1.0
    Xs = X / scale
    if nonneg:
        theta_s = nnls(Xs, y)
    else:
        theta_s, *_ = np.linalg.lstsq(Xs, y, rcond=None)
    theta = theta_s / scale
    resid = y - X @ theta
    stats = TrainingStats(rows=len(y), residual_norm=float(np.linalg.norm(resid)))
    return ArmaxModel(theta=theta, config=config, nonneg=nonneg, stats=stats)


def predict_openloop(
    model: ArmaxModel,
    y_history: np.ndarray,
    u_traj: np.ndarray,
    d_traj: np.ndarray,
    steps: int,
) -> np.ndarray:
    """Recursive multi-step prediction feeding outputs back as lags.

    ``y_history`` holds the last delta + 1 measured outputs (oldest first).
    ``u_traj`` and ``d_traj`` cover intervals k0 + 1 - delta .. k0 + steps
    where k0 is the prediction origin, so the entries for the predicted
    intervals sit at the tail.
    """
    delta = model.config.delta
    if steps == 0:
        return np.zeros(0)
    if len(y_history) < delta + 1:
        raise TooShort(f"history must hold {delta + 1} outputs")
    if len(u_traj) < delta + steps or len(d_traj) < delta + steps:
        raise TooShort("input/disturbance trajectories do not cover the horizon")

    y_buf = np.concatenate([np.asarray(y_history, dtype=float)[-(delta + 1):], np.zeros(steps)])
    u_traj = np.asarray(u_traj, dtype=float)
    d_traj = np.asarray(d_traj, dtype=float)
    # u_traj/d_traj index i holds interval k0 + 1 - delta + i
    for j in range(steps):
        k = delta + j  # buffer index of the latest known output
        y_lags = y_buf[k - delta: k + 1][::-1]
        u_lags = u_traj[j: j + delta + 1][::-1]
        d_lags = d_traj[j: j + delta + 1][::-1].reshape(-1)
        row = np.concatenate([y_lags, u_lags, d_lags])
        y_buf[k + 1] = row @ model.theta
    return y_buf[delta + 1:]


def horizon_predictions(model: ArmaxModel, ts: TimeSeries, steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized s-step-ahead predictions at every admissible origin.

    Returns (predicted, measured) for the final step of each rollout; origins
    run over every sample with full lag history and ``steps`` future samples.
    """
    frames = encode_series(ts, model.config)
    return _horizon_from_frames(model, frames, steps)


def _horizon_from_frames(model: ArmaxModel, frames: FeatureFrames, steps: int):
    delta = model.config.delta
    n = frames.n
    origins = np.arange(delta, n - steps)
    if len(origins) == 0:
        raise TooShort("series too short for the requested horizon")
    width = 2 + model.config.tau

    # predicted outputs per origin, filled step by step; measured lags first
    y_hat = np.empty((len(origins), delta + 1 + steps))
    for lag in range(delta + 1):
        y_hat[:, delta - lag] = frames.y[origins - lag]
    for j in range(steps):
        k = origins + 1 + j  # target interval
        acc = np.zeros(len(origins))
        for lag in range(delta + 1):
            acc += model.theta_y[lag] * y_hat[:, delta + j - lag]
            acc += model.theta_u[lag] * frames.u[k - lag]
            acc += frames.d[k - lag] @ model.theta_d(lag)
        y_hat[:, delta + 1 + j] = acc
    return y_hat[:, -1], frames.y[origins + steps]
