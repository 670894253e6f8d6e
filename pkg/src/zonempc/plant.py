"""Ground-truth multi-zone thermal plant.

Each zone is a 2R2C network: an air-plus-furniture node coupled through its
envelope wall node to ambient, and coupled directly to the neighboring zone.
Water panels inject ``panel_ua * b * (T_sup - T_zone)``; window gains follow
the physical solar model. The simulator doubles as the data generator for the
identification studies: closed-loop logs are written at one-minute resolution
with the total energy measurement split per zone by design-flow allocation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from importlib import resources

import numpy as np

from .errors import ConfigError, UnstableStep
from .solar import solar_angles, window_gain
from .timeseries import TimeSeries
from .weather import ClimateConfig, synth_weather

TEMP_SANITY_MIN = -20.0
TEMP_SANITY_MAX = 60.0
MAX_EULER_STEP = 60.0

MODE_HEATING = "heating"
MODE_COOLING = "cooling"


@dataclass(frozen=True)
class ZoneParams:
    """Per-zone RC constants; capacitances in J/K, resistances in K/W."""

    name: str
    c_zone: float
    c_wall: float
    r_zone_wall: float
    r_wall_amb: float
    r_zone_neighbor: float
    a_win: float
    alpha0: float
    panel_ua: float
    design_flow: float

    def __post_init__(self):
        positive = {
            "c_zone": self.c_zone, "c_wall": self.c_wall,
            "r_zone_wall": self.r_zone_wall, "r_wall_amb": self.r_wall_amb,
            "r_zone_neighbor": self.r_zone_neighbor, "a_win": self.a_win,
            "design_flow": self.design_flow,
        }
        for key, value in positive.items():
            if value <= 0:
                raise ConfigError(f"zone {self.name!r}: {key} must be > 0")
        # panel_ua == 0 is allowed: it decouples the actuator entirely.
        if self.panel_ua < 0:
            raise ConfigError(f"zone {self.name!r}: panel_ua must be >= 0")


@dataclass(frozen=True)
class PlantConfig:
    latitude: float
    longitude: float
    zones: tuple[ZoneParams, ...]
    t_sup_heating: float = 35.0
    t_sup_cooling: float = 18.0
    #: zones listed here have their envelope wall facing a neighboring
    #: conditioned unit held at a fixed temperature instead of the ambient
    adjacent_zones: tuple[str, ...] = ()
    adjacent_unit_temp: float = 22.0

    @property
    def n_zones(self) -> int:
        return len(self.zones)

    def supply_temperature(self, mode: str) -> float:
        return self.t_sup_heating if mode == MODE_HEATING else self.t_sup_cooling

    def wall_external_temps(self, t_amb: float) -> np.ndarray:
        return np.array([
            self.adjacent_unit_temp if z.name in self.adjacent_zones else t_amb
            for z in self.zones
        ])

    def to_dict(self) -> dict:
        return {
            "latitude": self.latitude,
            "longitude": self.longitude,
            "t_sup_heating": self.t_sup_heating,
            "t_sup_cooling": self.t_sup_cooling,
            "adjacent_zones": list(self.adjacent_zones),
            "adjacent_unit_temp": self.adjacent_unit_temp,
            "zones": [asdict(z) for z in self.zones],
        }


def load_plant(path=None) -> PlantConfig:
    """Read plant parameters from JSON; without a path, the packaged defaults."""
    if path is None:
        text = resources.files("zonempc.data").joinpath("default_plant.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    try:
        doc = json.loads(text)
        zones = tuple(ZoneParams(**z) for z in doc.pop("zones"))
        if "adjacent_zones" in doc:
            doc["adjacent_zones"] = tuple(doc["adjacent_zones"])
        return PlantConfig(zones=zones, **doc)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"invalid plant file: {exc}") from exc


@dataclass(frozen=True)
class PlantState:
    zone_temps: np.ndarray
    wall_temps: np.ndarray
    time: float  # epoch seconds UTC

    def __post_init__(self):
        object.__setattr__(self, "zone_temps", np.asarray(self.zone_temps, dtype=float))
        object.__setattr__(self, "wall_temps", np.asarray(self.wall_temps, dtype=float))


def initial_state(plant: PlantConfig, start: datetime, zone_temp: float = 21.0) -> PlantState:
    n = plant.n_zones
    return PlantState(np.full(n, zone_temp), np.full(n, zone_temp), start.timestamp())


def _neighbor_flows(zones, zone_temps):
    """Symmetric inter-zone flows; adjacent zones share a series resistance."""
    n = len(zones)
    q = np.zeros(n)
    for i in range(n - 1):
        r_pair = 0.5 * (zones[i].r_zone_neighbor + zones[i + 1].r_zone_neighbor)
        flow = (zone_temps[i + 1] - zone_temps[i]) / r_pair
        q[i] += flow
        q[i + 1] -= flow
    return q


def zone_flows(plant: PlantConfig, state: PlantState, valves, t_sup, t_amb, i_hor, q_sol=None):
    """All heat flows (W) at the current state; positive into the node."""
    zones = plant.zones
    tz = state.zone_temps
    tw = state.wall_temps
    if q_sol is None:
        alpha, beta = solar_angles(state.time, plant.latitude, plant.longitude)
        q_sol = np.array([
            window_gain(i_hor, alpha, beta, z.a_win, z.alpha0) for z in zones
        ])
    else:
        q_sol = np.asarray(q_sol, dtype=float)
    valves = np.asarray(valves, dtype=float)
    q_act = np.array([z.panel_ua for z in zones]) * valves * (t_sup - tz)
    q_wall_to_zone = (tw - tz) / np.array([z.r_zone_wall for z in zones])
    t_ext = plant.wall_external_temps(t_amb)
    q_amb_to_wall = (t_ext - tw) / np.array([z.r_wall_amb for z in zones])
    q_neighbor = _neighbor_flows(zones, tz)
    return {
        "q_act": q_act,
        "q_sol": q_sol,
        "q_wall_to_zone": q_wall_to_zone,
        "q_amb_to_wall": q_amb_to_wall,
        "q_neighbor": q_neighbor,
    }


def step(plant: PlantConfig, state: PlantState, valves, t_sup, t_amb, i_hor, dt,
         q_sol=None):
    """One explicit-Euler update.

    Returns the advanced state and the per-zone actuator power (W) held over
    the step. ``dt`` must not exceed MAX_EULER_STEP; coarser control intervals
    are sub-stepped by the caller.
    """
    if dt > MAX_EULER_STEP + 1e-9:
        raise ValueError(f"dt={dt} exceeds the {MAX_EULER_STEP}s inner step")
    flows = zone_flows(plant, state, valves, t_sup, t_amb, i_hor, q_sol=q_sol)
    c_zone = np.array([z.c_zone for z in plant.zones])
    c_wall = np.array([z.c_wall for z in plant.zones])
    dz = (flows["q_wall_to_zone"] + flows["q_neighbor"] + flows["q_sol"] + flows["q_act"]) / c_zone
    dw = (-flows["q_wall_to_zone"] + flows["q_amb_to_wall"]) / c_wall
    new_tz = state.zone_temps + dt * dz
    new_tw = state.wall_temps + dt * dw
    if (new_tz.min() < TEMP_SANITY_MIN or new_tz.max() > TEMP_SANITY_MAX
            or new_tw.min() < TEMP_SANITY_MIN or new_tw.max() > TEMP_SANITY_MAX):
        raise UnstableStep(
            f"temperature left [{TEMP_SANITY_MIN}, {TEMP_SANITY_MAX}] at t={state.time}"
        )
    return PlantState(new_tz, new_tw, state.time + dt), flows["q_act"]


def allocate_energy(q_total: float, valves, design_flows) -> np.ndarray:
    """Split the building-level energy measurement over zones in proportion to
    design flow times valve opening; all-closed gives zeros."""
    valves = np.asarray(valves, dtype=float)
    flows = np.asarray(design_flows, dtype=float)
    weights = flows * valves
    total = weights.sum()
    if total <= 0.0:
        return np.zeros_like(weights)
    return q_total * weights / total


@dataclass
class HysteresisConfig:
    setpoint: float
    band: float = 1.0
    mode: str = MODE_HEATING

    def __post_init__(self):
        if self.band <= 0:
            raise ConfigError("hysteresis band must be > 0")


def hysteresis_control(temp: float, cfg: HysteresisConfig, previous: int) -> int:
    """Two-threshold relay. Heating opens below setpoint - band and closes
    above setpoint; cooling is mirrored about [setpoint, setpoint + band]."""
    if cfg.mode == MODE_HEATING:
        if temp < cfg.setpoint - cfg.band:
            return 1
        if temp > cfg.setpoint:
            return 0
        return previous
    if temp > cfg.setpoint + cfg.band:
        return 1
    if temp < cfg.setpoint:
        return 0
    return previous


class HysteresisController:
    """Stateful per-zone relay controller queried once per minute."""

    def __init__(self, configs):
        self.configs = list(configs)
        self.previous = [0] * len(self.configs)

    def valves(self, minute_index: int, time_s: float, zone_temps) -> np.ndarray:
        out = np.empty(len(self.configs))
        for i, cfg in enumerate(self.configs):
            self.previous[i] = hysteresis_control(zone_temps[i], cfg, self.previous[i])
            out[i] = self.previous[i]
        return out


class PrbsController:
    """Pseudo-random binary valve sequence with a fixed hold time.

    A wide safety band overrides the sequence so the excitation cannot run
    the zones out of the realistic operating range.
    """

    def __init__(self, n_zones: int, seed: int, hold_minutes: int = 90,
                 mode: str = MODE_HEATING, safety_low: float = 18.0,
                 safety_high: float = 28.0):
        if hold_minutes < 1:
            raise ConfigError("hold_minutes must be >= 1")
        self.n_zones = n_zones
        self.hold = hold_minutes
        self.mode = mode
        self.safety_low = safety_low
        self.safety_high = safety_high
        self.rng = np.random.default_rng(seed)
        self.current = np.zeros(n_zones)

    def valves(self, minute_index: int, time_s: float, zone_temps) -> np.ndarray:
        if minute_index % self.hold == 0:
            self.current = self.rng.integers(0, 2, size=self.n_zones).astype(float)
        out = self.current.copy()
        for i, temp in enumerate(zone_temps):
            if self.mode == MODE_HEATING:
                if temp > self.safety_high:
                    out[i] = 0.0
                elif temp < self.safety_low:
                    out[i] = 1.0
            else:
                if temp < self.safety_low:
                    out[i] = 0.0
                elif temp > self.safety_high:
                    out[i] = 1.0
        return out


LOG_STEP_SECONDS = 60.0


def run_simulation(
    plant: PlantConfig,
    weather: TimeSeries,
    controller,
    days: int,
    mode: str = MODE_HEATING,
    start_state: PlantState | None = None,
    noise_std: float = 0.0,
    noise_seed: int = 0,
) -> TimeSeries:
    """Closed-loop minute-resolution simulation shared by every controller.

    The controller object is queried each minute with
    ``valves(minute_index, time_s, zone_temps)`` and returns per-zone
    commands in [0, 1] (applied as-is for that minute). Logged temperature
    channels optionally carry additive measurement noise; the dynamics always
    evolve on the true state.
    """
    n_min = int(days * 1440)
    if weather.step_seconds != LOG_STEP_SECONDS:
        raise ConfigError("weather trace must be at one-minute resolution")
    if weather.length < n_min:
        raise ConfigError("weather trace shorter than the simulation")

    start = weather.start_time
    state = start_state or initial_state(plant, start)
    t_sup = plant.supply_temperature(mode)
    t_amb = weather.channel("t_amb")
    i_hor = weather.channel("i_hor")
    times = weather.times()[:n_min]
    n_zones = plant.n_zones

    alpha, beta = solar_angles(times, plant.latitude, plant.longitude)
    q_sol = np.column_stack([
        window_gain(i_hor[:n_min], alpha, beta, z.a_win, z.alpha0) for z in plant.zones
    ])

    design_flows = np.array([z.design_flow for z in plant.zones])
    temps_log = np.empty((n_min, n_zones))
    valves_log = np.empty((n_min, n_zones))
    q_alloc_log = np.empty((n_min, n_zones))
    q_total_log = np.empty(n_min)

    observe = getattr(controller, "observe", None)
    for i in range(n_min):
        valves = np.clip(np.asarray(
            controller.valves(i, times[i], state.zone_temps), dtype=float), 0.0, 1.0)
        temps_log[i] = state.zone_temps
        valves_log[i] = valves
        state, q_act = step(
            plant, state, valves, t_sup, t_amb[i], i_hor[i], LOG_STEP_SECONDS,
            q_sol=q_sol[i],
        )
        # energy bookkeeping per minute, in watt-minutes (power held for 1 min)
        q_total = float(np.abs(q_act).sum())
        q_total_log[i] = q_total
        q_alloc_log[i] = allocate_energy(q_total, valves, design_flows)
        if observe is not None:
            observe(i, times[i], state.zone_temps, q_alloc_log[i])

    if noise_std > 0.0:
        rng = np.random.default_rng(noise_seed)
        temps_log = temps_log + rng.normal(0.0, noise_std, size=temps_log.shape)

    channels: dict[str, np.ndarray] = {}
    units: dict[str, str] = {}
    for j, zone in enumerate(plant.zones):
        channels[f"temp_{zone.name}"] = temps_log[:, j]
        units[f"temp_{zone.name}"] = "degC"
    for j, zone in enumerate(plant.zones):
        channels[f"valve_{zone.name}"] = valves_log[:, j]
        units[f"valve_{zone.name}"] = "frac"
    channels["t_sup"] = np.full(n_min, t_sup)
    units["t_sup"] = "degC"
    channels["t_amb"] = t_amb[:n_min].copy()
    units["t_amb"] = "degC"
    channels["i_hor"] = i_hor[:n_min].copy()
    units["i_hor"] = "W/m2"
    channels["q_total"] = q_total_log
    units["q_total"] = "W"
    for j, zone in enumerate(plant.zones):
        channels[f"q_alloc_{zone.name}"] = q_alloc_log[:, j]
        units[f"q_alloc_{zone.name}"] = "W"

    return TimeSeries(start, LOG_STEP_SECONDS, channels, units)


def generate_dataset(
    plant: PlantConfig,
    controller_kind: str,
    days: int,
    seed: int,
    mode: str = MODE_HEATING,
    setpoint: float = 23.0,
    band: float = 1.0,
    prbs_hold_minutes: int = 90,
    climate: ClimateConfig | None = None,
    weather: TimeSeries | None = None,
    start: datetime | None = None,
    noise_std: float = 0.0,
    start_temp: float = 21.0,
) -> TimeSeries:
    """Closed-loop data generation with the relay baseline or a PRBS drive."""
    if days < 1:
        raise ConfigError("days must be >= 1")
    start = start or datetime(2021, 1, 1, tzinfo=timezone.utc)
    if weather is None:
        weather = synth_weather(days, start, seed, plant.latitude, plant.longitude, climate)
    if controller_kind == "hysteresis":
        cfgs = [HysteresisConfig(setpoint, band, mode) for _ in plant.zones]
        controller = HysteresisController(cfgs)
    elif controller_kind == "prbs":
        controller = PrbsController(plant.n_zones, seed + 1, prbs_hold_minutes, mode=mode)
    else:
        raise ConfigError(f"unknown controller kind {controller_kind!r}")
    return run_simulation(
        plant, weather, controller, days, mode=mode,
        start_state=initial_state(plant, start, start_temp),
        noise_std=noise_std, noise_seed=seed + 2,
    )
