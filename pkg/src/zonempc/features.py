"""Regressor assembly for the lagged linear zone model.

Each regression row stacks, per lag 0..delta, the zone output, the actuator
drive, and the disturbance vector (ambient, neighbor, tau one-hot solar
entries); the target is the next-step output. With one neighbor zone the row
width is (delta + 1) * (4 + tau).
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import MissingChannel, MissingSupplyTemperature, TooShort
from .solar import OneHotSolarConfig, onehot_encode, solar_angles, vertical_irradiance
from .timeseries import TimeSeries

ACTUATOR_VALVE = "valve_only"
ACTUATOR_VALVE_DT = "valve_times_dT"
ACTUATOR_ENERGY = "measured_energy"
ACTUATOR_OPTIONS = (ACTUATOR_VALVE, ACTUATOR_VALVE_DT, ACTUATOR_ENERGY)


@dataclass(frozen=True)
class ChannelRoles:
    """Names of the series channels each model role binds to."""

    output: str
    neighbor: str
    ambient: str
    irradiance: str
    valve: str
    supply: str | None = None
    energy: str | None = None


@dataclass(frozen=True)
class RegressorConfig:
    delta: int
    tau: int
    actuator_option: str
    roles: ChannelRoles
    latitude: float
    longitude: float

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.actuator_option not in ACTUATOR_OPTIONS:
            raise ValueError(f"unknown actuator option {self.actuator_option!r}")
        if self.actuator_option == ACTUATOR_VALVE_DT and self.roles.supply is None:
            raise MissingSupplyTemperature("valve_times_dT needs a supply channel")
        if self.actuator_option == ACTUATOR_ENERGY and self.roles.energy is None:
            raise MissingChannel("measured_energy needs an energy channel")

    @property
    def row_width(self) -> int:
        return (self.delta + 1) * (4 + self.tau)

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "RegressorConfig":
        roles = ChannelRoles(**d["roles"])
        return RegressorConfig(
            delta=d["delta"], tau=d["tau"], actuator_option=d["actuator_option"],
            roles=roles, latitude=d["latitude"], longitude=d["longitude"],
        )


def actuator_input(option: str, b, t_sup=None, t_bar=None, energy=None):
    """Scalar (or array) actuator drive for one sample.

    valve_only passes the valve through, valve_times_dT scales it by the
    supply-to-room temperature difference (negative while cooling), and
    measured_energy passes the allocated-energy channel through.
    """
    if option == ACTUATOR_VALVE:
        return b
    if option == ACTUATOR_VALVE_DT:
        if t_sup is None:
            raise MissingSupplyTemperature("valve_times_dT needs a supply temperature")
        return np.asarray(b) * (np.asarray(t_sup) - np.asarray(t_bar))
    if option == ACTUATOR_ENERGY:
        if energy is None:
            raise MissingChannel("measured_energy needs the allocated-energy values")
        return energy
    raise ValueError(f"unknown actuator option {option!r}")


@dataclass(frozen=True)
class FeatureFrames:
    """Per-sample aligned arrays the lag stacker consumes.

    ``d`` columns are ambient, neighbor, then tau one-hot solar entries.
    """

    y: np.ndarray
    u: np.ndarray
    d: np.ndarray
    times: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.y)


def encode_series(ts: TimeSeries, config: RegressorConfig) -> FeatureFrames:
    """Derive output/input/disturbance frames from a logged series.

    Vertical irradiance is computed from the horizontal channel and the sun
    position at each timestamp, then spread over the time-of-day bins.
    """
    roles = config.roles
    needed = [roles.output, roles.neighbor, roles.ambient, roles.irradiance, roles.valve]
    if config.actuator_option == ACTUATOR_VALVE_DT:
        needed.append(roles.supply)
    if config.actuator_option == ACTUATOR_ENERGY:
        needed.append(roles.energy)
    for name in needed:
        if name not in ts.channels:
            raise MissingChannel(f"series lacks channel {name!r}")

    y = ts.channel(roles.output)
    times = ts.times()
    _, beta = solar_angles(times, config.latitude, config.longitude)
    i_vert = vertical_irradiance(ts.channel(roles.irradiance), beta)
    onehot = onehot_encode(i_vert, np.mod(times, 86400.0), OneHotSolarConfig(config.tau))

    if config.actuator_option == ACTUATOR_VALVE:
        u = ts.channel(roles.valve).copy()
    elif config.actuator_option == ACTUATOR_VALVE_DT:
        u = ts.channel(roles.valve) * (ts.channel(roles.supply) - y)
    else:
        u = ts.channel(roles.energy).copy()

    d = np.column_stack([ts.channel(roles.ambient), ts.channel(roles.neighbor), onehot])
    return FeatureFrames(y=y, u=u, d=d, times=times)


def stack_lags(frames: FeatureFrames, delta: int) -> tuple[np.ndarray, np.ndarray]:
    """Build (X, y_next) from aligned frames; rows run k = delta .. n-2.

    Samples are interval aggregates, so the input and disturbance lag windows
    start at the target's own interval: the valve duty during interval k+1 is
    what drives the temperature change from interval k to k+1.
    """
    n = frames.n
    if n < delta + 2:
        raise TooShort(f"need more than {delta + 1} samples, got {n}")
    rows = n - delta - 1
    ks = np.arange(delta, n - 1)
    y_cols = [frames.y[ks - lag] for lag in range(delta + 1)]
    u_cols = [frames.u[ks + 1 - lag] for lag in range(delta + 1)]
    d_blocks = [frames.d[ks + 1 - lag] for lag in range(delta + 1)]
    X = np.column_stack(y_cols + u_cols + d_blocks)
    target = frames.y[ks + 1]
    assert X.shape == (rows, (delta + 1) * (2 + frames.d.shape[1]))
    return X, target


def build_regression_rows(ts: TimeSeries, config: RegressorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Lagged design matrix and next-step targets for one zone."""
    frames = encode_series(ts, config)
    return stack_lags(frames, config.delta)


@dataclass(frozen=True)
class MlSeriesArrays:
    """Raw per-sample quantities the machine-learning models consume: level,
    one-step change, room-to-neighbor difference, weather and actuator drive.
    ``dy[0]`` is NaN (no prior sample)."""

    y: np.ndarray
    dy: np.ndarray
    nbdiff: np.ndarray
    amb: np.ndarray
    ihor: np.ndarray
    u: np.ndarray
    times: np.ndarray

    @property
    def n(self) -> int:
        return len(self.y)


def ml_series_arrays(ts: TimeSeries, roles: ChannelRoles, actuator_option: str) -> MlSeriesArrays:
    for name in (roles.output, roles.neighbor, roles.ambient, roles.irradiance):
        if name not in ts.channels:
            raise MissingChannel(f"series lacks channel {name!r}")
    y = ts.channel(roles.output)
    dy = np.empty_like(y)
    dy[0] = np.nan
    dy[1:] = np.diff(y)
    if actuator_option == ACTUATOR_VALVE:
        u = ts.channel(roles.valve).copy()
    elif actuator_option == ACTUATOR_VALVE_DT:
        if roles.supply is None or roles.supply not in ts.channels:
            raise MissingSupplyTemperature("valve_times_dT needs a supply channel")
        u = ts.channel(roles.valve) * (ts.channel(roles.supply) - y)
    elif actuator_option == ACTUATOR_ENERGY:
        if roles.energy is None or roles.energy not in ts.channels:
            raise MissingChannel("measured_energy needs an energy channel")
        u = ts.channel(roles.energy).copy()
    else:
        raise ValueError(f"unknown actuator option {actuator_option!r}")
    return MlSeriesArrays(
        y=y, dy=dy, nbdiff=y - ts.channel(roles.neighbor),
        amb=ts.channel(roles.ambient), ihor=ts.channel(roles.irradiance),
        u=u, times=ts.times(),
    )
