"""Receding-horizon control against the simulated plant.

Timeline convention shared with the regression layer: samples are interval
aggregates. At a solve instant the last completed interval has index 0;
decisions are valve duties for intervals 1..N, predicted outputs are the
interval means y_1..y_N. The duty of interval k enters the model at input
lag 0 of step k.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .armax import ArmaxModel
from .errors import ConfigError, ForecastTooShort, LowerBoundRequested, ZonempcError
from .features import (
    ACTUATOR_ENERGY,
    ACTUATOR_VALVE,
    ACTUATOR_VALVE_DT,
    OneHotSolarConfig,
)
from .forest import ForestModelSet
from .icnn import IcnnZoneModel, RolloutWindow, rollout
from .plant import (
    MODE_COOLING,
    MODE_HEATING,
    PlantConfig,
    run_simulation,
)
from .qp import QpProblem, QpSolution, solve_qp
from .solar import onehot_encode, solar_angles, vertical_irradiance
from .timeseries import TimeSeries
from .weather import synth_weather


@dataclass(frozen=True)
class ComfortSegment:
    start_hour: float
    end_hour: float
    y_min: float | None
    y_max: float | None


@dataclass
class ComfortSchedule:
    """Step function of the hour of day; segments must cover [0, 24)."""

    segments: list[ComfortSegment]

    def bounds_at(self, epoch_seconds) -> tuple[np.ndarray, np.ndarray]:
        hours = np.mod(np.asarray(epoch_seconds, dtype=float), 86400.0) / 3600.0
        y_min = np.full(hours.shape, -np.inf)
        y_max = np.full(hours.shape, np.inf)
        assigned = np.zeros(hours.shape, dtype=bool)
        for seg in self.segments:
            if seg.start_hour <= seg.end_hour:
                mask = (hours >= seg.start_hour) & (hours < seg.end_hour)
            else:  # wraps midnight
                mask = (hours >= seg.start_hour) | (hours < seg.end_hour)
            y_min[mask] = -np.inf if seg.y_min is None else seg.y_min
            y_max[mask] = np.inf if seg.y_max is None else seg.y_max
            assigned |= mask
        if not assigned.all():
            raise ConfigError("comfort schedule does not cover the whole day")
        return y_min, y_max

    @staticmethod
    def constant(y_min, y_max) -> "ComfortSchedule":
        return ComfortSchedule([ComfortSegment(0.0, 24.0, y_min, y_max)])


@dataclass
class MpcConfig:
    horizon_steps: int = 14
    r_input: float = 1.0
    lambda_slack: float = 100.0
    control_step_seconds: float = 1800.0
    mode: str = MODE_HEATING
    comfort: ComfortSchedule = field(default_factory=lambda: ComfortSchedule.constant(22.0, 26.0))
    u_min: float = 0.0
    u_max: float = 1.0
    #: drive magnitude for energy-input models, W.min per control interval
    energy_capacity: float | None = None
    allow_nonconvex_lower_bound: bool = False
    qp_tol: float = 1e-6

    def __post_init__(self):
        if self.horizon_steps < 1:
            raise ConfigError("horizon_steps must be >= 1")
        if self.r_input < 0:
            raise ConfigError("r_input must be >= 0")
        if self.lambda_slack <= 0:
            raise ConfigError("lambda_slack must be > 0")
        if self.mode not in (MODE_HEATING, MODE_COOLING):
            raise ConfigError(f"unknown mode {self.mode!r}")

    def to_dict(self) -> dict:
        return {
            "horizon_steps": self.horizon_steps,
            "r_input": self.r_input,
            "lambda_slack": self.lambda_slack,
            "control_step_seconds": self.control_step_seconds,
            "mode": self.mode,
            "comfort": [
                {"start_hour": s.start_hour, "end_hour": s.end_hour,
                 "y_min": s.y_min, "y_max": s.y_max}
                for s in self.comfort.segments
            ],
            "u_min": self.u_min,
            "u_max": self.u_max,
            "energy_capacity": self.energy_capacity,
            "allow_nonconvex_lower_bound": self.allow_nonconvex_lower_bound,
        }

    @staticmethod
    def from_dict(doc: dict) -> "MpcConfig":
        doc = dict(doc)
        comfort = doc.pop("comfort", None)
        cfg = MpcConfig(**{k: v for k, v in doc.items() if k != "qp_tol"})
        if comfort is not None:
            cfg.comfort = ComfortSchedule(
                [ComfortSegment(s["start_hour"], s["end_hour"], s.get("y_min"), s.get("y_max"))
                 for s in comfort]
            )
        return cfg

    @staticmethod
    def load(path) -> "MpcConfig":
        with open(path) as fh:
            return MpcConfig.from_dict(json.load(fh))


@dataclass
class MpcSolution:
    duties: np.ndarray
    outputs: np.ndarray
    slacks: np.ndarray
    objective: float
    iterations: int
    solve_seconds: float


@dataclass(frozen=True)
class Forecast:
    """Exogenous quantities for intervals 1..N plus interval start times."""

    times: np.ndarray
    amb: np.ndarray
    nb: np.ndarray
    ihor: np.ndarray


@dataclass(frozen=True)
class ControlHistory:
    """Per-interval records for completed intervals (oldest first)."""

    times: np.ndarray
    y: np.ndarray
    duty: np.ndarray
    amb: np.ndarray
    nb: np.ndarray
    ihor: np.ndarray
    energy: np.ndarray


def drive_scale(actuator: str, cfg: MpcConfig, t_sup: float, y_last: float) -> float:
    """Physical drive per unit duty for the trained actuator encoding."""
    if actuator == ACTUATOR_VALVE:
        return 1.0
    if actuator == ACTUATOR_VALVE_DT:
        return t_sup - y_last
    if actuator == ACTUATOR_ENERGY:
        if cfg.energy_capacity is None:
            raise ConfigError("energy-input model needs energy_capacity in the MPC config")
        return cfg.energy_capacity
    raise ConfigError(f"unknown actuator {actuator!r}")


def _armax_d_rows(model: ArmaxModel, times, amb, nb, ihor) -> np.ndarray:
    cfg = model.config
    _, beta = solar_angles(times, cfg.latitude, cfg.longitude)
    i_vert = vertical_irradiance(ihor, beta)
    onehot = onehot_encode(i_vert, np.mod(times, 86400.0), OneHotSolarConfig(cfg.tau))
    return np.column_stack([amb, nb, np.atleast_2d(onehot)])


def drive_history(actuator: str, history: ControlHistory, t_sup: float) -> np.ndarray:
    """Applied physical drives of the completed intervals."""
    if actuator == ACTUATOR_VALVE:
        return history.duty.copy()
    if actuator == ACTUATOR_VALVE_DT:
        return history.duty * (t_sup - history.y)
    return history.energy.copy()


def build_qp(model, history: ControlHistory, forecast: Forecast, cfg: MpcConfig,
             t_sup: float) -> QpProblem:
    """Assemble the horizon problem for a lagged linear model or a per-step
    forest set. Variables are [duties, outputs, slacks]."""
    N = cfg.horizon_steps
    if len(forecast.times) < N:
        raise ForecastTooShort(f"forecast covers {len(forecast.times)} steps, need {N}")
    if isinstance(model, ArmaxModel):
        a_eq, b_eq = _armax_dynamics(model, history, forecast, cfg, t_sup)
        actuator = model.config.actuator_option
    elif isinstance(model, ForestModelSet):
        a_eq, b_eq = _forest_dynamics(model, history, forecast, cfg, t_sup)
        actuator = model.cfg.actuator_option
    else:
        raise ConfigError(f"cannot build a QP for {type(model).__name__}")

    y_min, y_max = cfg.comfort.bounds_at(forecast.times[:N])
    n = 3 * N
    P = np.zeros((n, n))
    P[np.arange(N), np.arange(N)] = 2.0 * cfg.r_input
    q = np.zeros(n)
    q[2 * N:] = cfg.lambda_slack

    rows = []
    lo, hi = [], []
    for k in range(N):
        row = np.zeros(n)
        row[N + k] = 1.0
        row[2 * N + k] = -1.0
        rows.append(row)
        lo.append(-np.inf)
        hi.append(y_max[k])
        row = np.zeros(n)
        row[N + k] = 1.0
        row[2 * N + k] = 1.0
        rows.append(row)
        lo.append(y_min[k])
        hi.append(np.inf)
    bounds_rows = np.zeros((2 * N, n))
    bounds_rows[: N, : N] = np.eye(N)
    bounds_rows[N:, 2 * N:] = np.eye(N)
    A_in = np.vstack([np.array(rows), bounds_rows])
    l_in = np.concatenate([np.array(lo), np.full(N, cfg.u_min), np.zeros(N)])
    u_in = np.concatenate([np.array(hi), np.full(N, cfg.u_max), np.full(N, np.inf)])

    layout = {"n_duties": N, "n_outputs": N, "n_slacks": N, "actuator": actuator}
    return QpProblem(P=P, q=q, A_eq=a_eq, b_eq=b_eq, A_in=A_in, l_in=l_in,
                     u_in=u_in, layout=layout)


def _armax_dynamics(model: ArmaxModel, history: ControlHistory, forecast: Forecast,
                    cfg: MpcConfig, t_sup: float):
    N = cfg.horizon_steps
    delta = model.config.delta
    if len(history.y) < delta + 1:
        raise ForecastTooShort("history shorter than the lag structure")
    y_hist = history.y[-(delta + 1):]
    u_hist = drive_history(model.config.actuator_option, history, t_sup)[-max(delta, 1):]
    d_hist = _armax_d_rows(model, history.times[-max(delta, 1):],
                           history.amb[-max(delta, 1):], history.nb[-max(delta, 1):],
                           history.ihor[-max(delta, 1):])
    d_fore = _armax_d_rows(model, forecast.times[:N], forecast.amb[:N],
                           forecast.nb[:N], forecast.ihor[:N])
    scale = drive_scale(model.config.actuator_option, cfg, t_sup, float(y_hist[-1]))

    def y_of(i):
        """Interval index -> (column, const) for outputs."""
        if i >= 1:
            return N + i - 1, 0.0
        return None, float(y_hist[len(y_hist) - 1 + i])

    def u_coeff(i):
        if i >= 1:
            return i - 1, 0.0
        return None, float(u_hist[len(u_hist) - 1 + i]) if len(u_hist) else 0.0

    def d_row(i):
        if i >= 1:
            return d_fore[i - 1]
        return d_hist[len(d_hist) - 1 + i]

    n = 3 * N
    A = np.zeros((N, n))
    b = np.zeros(N)
    for k in range(1, N + 1):
        row = np.zeros(n)
        const = 0.0
        row[N + k - 1] = 1.0
        for lag in range(delta + 1):
            col, val = y_of(k - 1 - lag)
            if col is None:
                const += model.theta_y[lag] * val
            else:
                row[col] -= model.theta_y[lag]
            colu, valu = u_coeff(k - lag)
            if colu is None:
                const += model.theta_u[lag] * valu
            else:
                row[colu] -= model.theta_u[lag] * scale
            const += float(d_row(k - lag) @ model.theta_d(lag))
        A[k - 1] = row
        b[k - 1] = const
    return A, b


def _forest_dynamics(model: ForestModelSet, history: ControlHistory, forecast: Forecast,
                     cfg: MpcConfig, t_sup: float):
    N = cfg.horizon_steps
    if model.n_steps < N:
        raise ForecastTooShort(f"forest set covers {model.n_steps} steps, horizon is {N}")
    nl = model.cfg.n_lag
    if len(history.y) < nl + 1:
        raise ForecastTooShort("history shorter than the lag structure")
    y = history.y
    dy_hist = np.diff(y)
    nbdiff_hist = history.y - history.nb
    u_hist = drive_history(model.cfg.actuator_option, history, t_sup)
    scale = drive_scale(model.cfg.actuator_option, cfg, t_sup, float(y[-1]))

    def exo(i, hist_arr, fore_arr):
        return float(fore_arr[i - 1]) if i >= 1 else float(hist_arr[len(hist_arr) - 1 + i])

    # outputs accumulate per-step changes: y_k = y_0 + sum_{j<=k} change_j
    n = 3 * N
    A = np.zeros((N, n))
    b = np.zeros(N)
    cum_w = np.zeros(N)
    cum_c = 0.0
    for k in range(1, N + 1):
        step = model.models[k]
        spec = step.spec
        xd = []
        for j in spec.measured_offsets:
            xd.append(float(dy_hist[len(dy_hist) - 1 + j]))
        for j in spec.measured_offsets:
            xd.append(float(nbdiff_hist[len(nbdiff_hist) - 1 + j]))
        for j in spec.d_offsets:
            xd.append(exo(j, history.amb, forecast.amb))
        for j in spec.d_offsets:
            xd.append(exo(j, history.ihor, forecast.ihor))
        t_target = forecast.times[k - 1]
        tod = 2.0 * np.pi * np.mod(t_target, 86400.0) / 86400.0
        doy = 2.0 * np.pi * np.mod(t_target / 86400.0, 365.25) / 365.25
        xd += [np.sin(tod), np.cos(tod), np.sin(doy), np.cos(doy)]
        w, c = step.extract_affine(np.array(xd))
        cum_c += c
        for idx, j in enumerate(spec.u_offsets):
            if j >= 1:
                cum_w[j - 1] += w[idx]
            else:
                cum_c += w[idx] * float(u_hist[len(u_hist) - 1 + j])
        A[k - 1, : N] = -cum_w * scale
        A[k - 1, N + k - 1] = 1.0
        b[k - 1] = float(y[-1]) + cum_c
    return A, b


def solution_from_qp(qp: QpProblem, sol: QpSolution, cfg: MpcConfig,
                     solve_seconds: float) -> MpcSolution:
    N = cfg.horizon_steps
    duties = np.clip(sol.x[: N], cfg.u_min, cfg.u_max)
    outputs = sol.x[N: 2 * N].copy()
    slacks = np.maximum(sol.x[2 * N:], 0.0)
    return MpcSolution(duties=duties, outputs=outputs, slacks=slacks,
                       objective=sol.objective, iterations=sol.iterations,
                       solve_seconds=solve_seconds)


def solve_linear_mpc(model, history: ControlHistory, forecast: Forecast,
                     cfg: MpcConfig, t_sup: float) -> MpcSolution:
    t0 = time.perf_counter()
    qp = build_qp(model, history, forecast, cfg, t_sup)
    sol = solve_qp(qp, tol=cfg.qp_tol)
    return solution_from_qp(qp, sol, cfg, time.perf_counter() - t0)


# --- network MPC by projected gradient --------------------------------------

PGD_STALL_ITERS = 50
PGD_STALL_TOL = 1e-7
PGD_MAX_ITERS = 400


def solve_icnn_mpc(model: IcnnZoneModel, history: ControlHistory, forecast: Forecast,
                   cfg: MpcConfig, t_sup: float, restarts: int = 5,
                   seed: int = 0) -> MpcSolution:
    """Projected subgradient descent on duties with the slack eliminated:
    the slack's optimum is the hinge of the comfort exceedance, so the
    reduced objective stays convex. Restarts keep the best run."""
    N = cfg.horizon_steps
    if len(forecast.times) < N:
        raise ForecastTooShort(f"forecast covers {len(forecast.times)} steps, need {N}")
    y_min, y_max = cfg.comfort.bounds_at(forecast.times[:N])
    if np.any(np.isfinite(y_min)) and not cfg.allow_nonconvex_lower_bound:
        raise LowerBoundRequested(
            "lower output bounds break the convexity guarantee for network "
            "models; enable allow_nonconvex_lower_bound to accept that"
        )
    nl = model.cfg.n_lag
    scale = drive_scale(model.cfg.actuator_option, cfg, t_sup, float(history.y[-1]))
    u_hist = drive_history(model.cfg.actuator_option, history, t_sup)
    window = RolloutWindow(
        y_history=history.y[-(nl + 1):],
        u_past=u_hist[len(u_hist) - (nl - 1):] if nl > 1 else np.zeros(0),
        amb=np.concatenate([history.amb[len(history.amb) - (nl - 1):] if nl > 1 else np.zeros(0), forecast.amb[:N]]),
        nb=np.concatenate([history.nb[len(history.nb) - (nl - 1):] if nl > 1 else np.zeros(0), forecast.nb[:N]]),
        ihor=np.concatenate([history.ihor[len(history.ihor) - (nl - 1):] if nl > 1 else np.zeros(0), forecast.ihor[:N]]),
        origin_time=float(forecast.times[0] - cfg.control_step_seconds),
        step_seconds=cfg.control_step_seconds,
    )

    def objective_and_grad(b):
        levels, jac = rollout(model, window, b * scale, N, want_gradient=True)
        over = np.maximum(0.0, levels - y_max)
        under = np.maximum(0.0, y_min - levels)
        obj = float(cfg.r_input * np.sum(b * b) + cfg.lambda_slack * np.sum(over + under))
        g = 2.0 * cfg.r_input * b
        active_hi = (levels - y_max) > 0.0
        active_lo = (y_min - levels) > 0.0
        if active_hi.any():
            g = g + cfg.lambda_slack * (jac[active_hi].sum(axis=0) * scale)
        if active_lo.any():
            g = g - cfg.lambda_slack * (jac[active_lo].sum(axis=0) * scale)
        return obj, g, levels, np.maximum(over, under)

    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    starts = [np.zeros(N), np.full(N, cfg.u_max), np.full(N, 0.5 * (cfg.u_min + cfg.u_max))]
    while len(starts) < restarts:
        starts.append(rng.uniform(cfg.u_min, cfg.u_max, size=N))
    best = None
    total_iters = 0
    for b0 in starts[:restarts]:
        b = b0.copy()
        obj, g, levels, eps = objective_and_grad(b)
        stall = 0
        step0 = 0.25
        for _ in range(PGD_MAX_ITERS):
            total_iters += 1
            step = step0
            improved = False
            for _ in range(20):
                cand = np.clip(b - step * g, cfg.u_min, cfg.u_max)
                cobj, cg, clev, ceps = objective_and_grad(cand)
                if cobj < obj - 1e-12:
                    improved = True
                    break
                step *= 0.5
            if improved:
                gain = obj - cobj
                b, obj, g, levels, eps = cand, cobj, cg, clev, ceps
                stall = stall + 1 if gain < PGD_STALL_TOL else 0
            else:
                stall += 1
            if stall >= PGD_STALL_ITERS:
                break
        if best is None or obj < best[0]:
            best = (obj, b, levels, eps)
    obj, b, levels, eps = best
    return MpcSolution(duties=b, outputs=levels, slacks=eps, objective=obj,
                       iterations=total_iters,
                       solve_seconds=time.perf_counter() - t0)


def pwm(u: float, control_step_seconds: float, sub_step_seconds: float) -> np.ndarray:
    """On/off schedule realizing duty ``u``: on for round(u * n) leading
    sub-steps. The realized mean differs from u by at most 1/(2 n)."""
    ratio = control_step_seconds / sub_step_seconds
    n = int(round(ratio))
    if abs(ratio - n) > 1e-9 or n < 1:
        raise ConfigError("sub step must divide the control step")
    on = int(round(float(u) * n))
    schedule = np.zeros(n)
    schedule[: on] = 1.0
    return schedule


# --- closed loop -------------------------------------------------------------

@dataclass(frozen=True)
class ForecastNoise:
    """Gaussian perturbation of the weather forecast, drawn deterministically
    per solve from the episode seed."""

    amb_std: float = 0.0
    ihor_std: float = 0.0


class MpcController:
    """Per-zone receding-horizon controllers sharing one weather view.

    Queried every minute by the simulation engine; re-plans at control-step
    boundaries and realizes each zone's duty with pulse-width modulation.
    Falls back to a relay rule during warm-up and on solver failures.
    """

    def __init__(self, plant: PlantConfig, models: list, cfg: MpcConfig,
                 weather: TimeSeries, seed: int = 0,
                 forecast_noise: ForecastNoise | None = None):
        if len(models) != plant.n_zones:
            raise ConfigError("need one model per zone")
        self.plant = plant
        self.models = models
        self.cfg = cfg
        self.weather = weather
        self.seed = seed
        self.noise = forecast_noise
        self.t_sup = plant.supply_temperature(cfg.mode)
        self.control_min = int(round(cfg.control_step_seconds / 60.0))
        self.history: list[dict] = []
        self._acc = None
        self._schedules = np.zeros((plant.n_zones, self.control_min))
        self._sched_duty = np.zeros(plant.n_zones)
        self.solve_log: list[dict] = []
        self._solve_index = 0
        self._warmup = max(self._needed_history(m) for m in models)

    @staticmethod
    def _needed_history(model) -> int:
        if isinstance(model, ArmaxModel):
            return model.config.delta + 1
        if isinstance(model, ForestModelSet):
            return model.cfg.n_lag + 1
        if isinstance(model, IcnnZoneModel):
            return model.cfg.n_lag + 1
        raise ConfigError(f"unsupported model type {type(model).__name__}")

    # --- engine protocol --------------------------------------------------
    def valves(self, minute_index: int, time_s: float, zone_temps) -> np.ndarray:
        pos = minute_index % self.control_min
        if pos == 0:
            self._finalize_interval(time_s)
            self._plan(time_s, zone_temps)
        self._accumulate(time_s, zone_temps, minute_index)
        return self._schedules[:, pos].copy()

    def observe(self, minute_index: int, time_s: float, zone_temps, q_alloc) -> None:
        if self._acc is not None:
            self._acc["energy"] += np.asarray(q_alloc, dtype=float)

    # --- bookkeeping -------------------------------------------------------
    def _accumulate(self, time_s, zone_temps, minute_index):
        if self._acc is None:
            return
        w = self.weather
        widx = min(int(round((time_s - w.start_time.timestamp()) / 60.0)), w.length - 1)
        self._acc["temps"] += np.asarray(zone_temps, dtype=float)
        self._acc["amb"] += float(w.channel("t_amb")[widx])
        self._acc["ihor"] += float(w.channel("i_hor")[widx])
        self._acc["count"] += 1

    def _finalize_interval(self, now_s: float):
        acc = self._acc
        if acc is not None and acc["count"] == self.control_min:
            c = acc["count"]
            self.history.append({
                "time": acc["start"],
                "y": acc["temps"] / c,
                "duty": self._sched_duty.copy(),
                "amb": acc["amb"] / c,
                "ihor": acc["ihor"] / c,
                "energy": acc["energy"].copy(),
            })
            if len(self.history) > 64:
                self.history.pop(0)
        self._acc = {
            "start": now_s,
            "temps": np.zeros(self.plant.n_zones),
            "amb": 0.0,
            "ihor": 0.0,
            "energy": np.zeros(self.plant.n_zones),
            "count": 0,
        }

    def _fallback_duty(self, temp: float, time_s: float) -> float:
        y_min, y_max = self.cfg.comfort.bounds_at(time_s)
        if self.cfg.mode == MODE_HEATING:
            floor = float(y_min) if np.isfinite(y_min) else 21.0
            return 1.0 if temp < floor + 0.1 else 0.0
        ceil = float(y_max) if np.isfinite(y_max) else 25.0
        return 1.0 if temp > ceil - 0.1 else 0.0

    def _forecast(self, now_s: float, nb_last: float) -> Forecast:
        N = self.cfg.horizon_steps
        w = self.weather
        start_idx = int(round((now_s - w.start_time.timestamp()) / 60.0))
        amb_min = w.channel("t_amb")
        ihor_min = w.channel("i_hor")
        amb, ihor, times = np.empty(N), np.empty(N), np.empty(N)
        for k in range(N):
            lo = start_idx + k * self.control_min
            hi = min(lo + self.control_min, w.length)
            lo = min(lo, w.length - 1)
            amb[k] = float(np.mean(amb_min[lo: max(hi, lo + 1)]))
            ihor[k] = float(np.mean(ihor_min[lo: max(hi, lo + 1)]))
            times[k] = now_s + k * self.cfg.control_step_seconds
        if self.noise is not None and (self.noise.amb_std > 0 or self.noise.ihor_std > 0):
            rng = np.random.default_rng((self.seed, self._solve_index))
            amb = amb + rng.normal(0.0, self.noise.amb_std, size=N)
            ihor = np.maximum(0.0, ihor + rng.normal(0.0, self.noise.ihor_std, size=N))
        nb = np.full(N, nb_last)
        return Forecast(times=times, amb=amb, nb=nb, ihor=ihor)

    def _zone_history(self, zone: int) -> ControlHistory:
        h = self.history
        nb_zone = 1 - zone if self.plant.n_zones > 1 else zone
        return ControlHistory(
            times=np.array([r["time"] for r in h]),
            y=np.array([r["y"][zone] for r in h]),
            duty=np.array([r["duty"][zone] for r in h]),
            amb=np.array([r["amb"] for r in h]),
            nb=np.array([r["y"][nb_zone] for r in h]),
            ihor=np.array([r["ihor"] for r in h]),
            energy=np.array([r["energy"][zone] for r in h]),
        )

    def _plan(self, now_s: float, zone_temps):
        self._solve_index += 1
        duties = np.zeros(self.plant.n_zones)
        for zone in range(self.plant.n_zones):
            model = self.models[zone]
            entry = {"time": now_s, "zone": zone, "fallback": False,
                     "solve_seconds": 0.0}
            if len(self.history) < self._warmup:
                duties[zone] = self._fallback_duty(zone_temps[zone], now_s)
                entry["fallback"] = True
            else:
                history = self._zone_history(zone)
                forecast = self._forecast(now_s, nb_last=float(history.nb[-1]))
                try:
                    if isinstance(model, IcnnZoneModel):
                        sol = solve_icnn_mpc(model, history, forecast, self.cfg,
                                             self.t_sup, seed=self.seed)
                    else:
                        sol = solve_linear_mpc(model, history, forecast, self.cfg,
                                               self.t_sup)
                    duties[zone] = float(sol.duties[0])
                    entry["solve_seconds"] = sol.solve_seconds
                    entry["objective"] = sol.objective
                except ZonempcError as exc:
                    duties[zone] = self._fallback_duty(zone_temps[zone], now_s)
                    entry["fallback"] = True
                    entry["error"] = str(exc)
            self.solve_log.append(entry)
        self._sched_duty = duties
        for zone in range(self.plant.n_zones):
            self._schedules[zone] = pwm(duties[zone], self.cfg.control_step_seconds, 60.0)


def closed_loop(
    plant: PlantConfig,
    models: list,
    cfg: MpcConfig,
    days: int,
    seed: int,
    weather: TimeSeries | None = None,
    climate=None,
    start=None,
    forecast_noise: ForecastNoise | None = None,
    start_state=None,
) -> tuple[TimeSeries, dict]:
    """Run a receding-horizon episode and return the log plus a summary."""
    from datetime import datetime, timezone

    start = start or datetime(2021, 1, 1, tzinfo=timezone.utc)
    if weather is None:
        weather = synth_weather(days, start, seed, plant.latitude, plant.longitude, climate)
    controller = MpcController(plant, models, cfg, weather, seed=seed,
                               forecast_noise=forecast_noise)
    log = run_simulation(plant, weather, controller, days, mode=cfg.mode,
                         start_state=start_state)
    solve_secs = [e["solve_seconds"] for e in controller.solve_log if not e["fallback"]]
    summary = {
        "mode": cfg.mode,
        "days": days,
        "seed": seed,
        "energy_wmin_total": float(log.channel("q_total").sum()),
        "energy_wmin_per_zone": {
            z.name: float(log.channel(f"q_alloc_{z.name}").sum()) for z in plant.zones
        },
        "n_solves": len(controller.solve_log),
        "n_fallback": int(sum(1 for e in controller.solve_log if e["fallback"])),
        "mean_solve_seconds": float(np.mean(solve_secs)) if solve_secs else 0.0,
        "max_solve_seconds": float(np.max(solve_secs)) if solve_secs else 0.0,
    }
    return log, summary
