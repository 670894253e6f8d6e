"""Model evaluation and experiment reports: open-loop error, the
sample-efficiency study, degree-day energy regressions, comfort metrics, and
the solver resource benchmark."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .armax import ArmaxModel, fit as fit_armax, horizon_predictions as armax_horizon
from .errors import SingularDesign, TooShort
from .features import RegressorConfig
from .forest import ForestDataConfig, ForestHyper, ForestModelSet, fit_horizon
from .icnn import IcnnDataConfig, IcnnZoneModel, TrainConfig, fit_zone_model
from .timeseries import TimeSeries, fold_slice, split_folds
from .mpc import ComfortSchedule


def horizon_steps(ts_step_seconds: float, horizon_seconds: float) -> int:
    steps = horizon_seconds / ts_step_seconds
    if abs(steps - round(steps)) > 1e-9 or steps < 1:
        raise TooShort("horizon must be a positive multiple of the series step")
    return int(round(steps))


def model_horizon_predictions(model, ts: TimeSeries, steps: int):
    if isinstance(model, ArmaxModel):
        return armax_horizon(model, ts, steps)
    if isinstance(model, (ForestModelSet, IcnnZoneModel)):
        return model.horizon_predictions(ts, steps)
    raise TypeError(f"cannot evaluate {type(model).__name__}")


def mse_openloop(model, validation, horizon_seconds: float) -> float:
    """Mean squared error of the final-step prediction over every admissible
    origin; ``validation`` is one series or a list of fold series."""
    series = [validation] if isinstance(validation, TimeSeries) else list(validation)
    sq, count = 0.0, 0
    for ts in series:
        steps = horizon_steps(ts.step_seconds, horizon_seconds)
        pred, truth = model_horizon_predictions(model, ts, steps)
        err = pred - truth
        sq += float(err @ err)
        count += len(err)
    if count == 0:
        raise TooShort("no admissible prediction origins")
    return sq / count


# --- sample-efficiency study -------------------------------------------------

@dataclass(frozen=True)
class ModelVariant:
    """A named model family + configuration entering the study."""

    name: str
    kind: str  # armax | rf | icnn
    armax_config: RegressorConfig | None = None
    nonneg: bool = True
    rf_config: ForestDataConfig | None = None
    rf_hyper: ForestHyper = field(default_factory=ForestHyper)
    icnn_config: IcnnDataConfig | None = None
    icnn_hidden: tuple[int, ...] = (20, 20)
    icnn_train: TrainConfig = field(default_factory=TrainConfig)

    def fit(self, folds: list[TimeSeries], horizon: int, seed: int):
        if self.kind == "armax":
            return fit_armax(folds, self.armax_config, nonneg=self.nonneg)
        if self.kind == "rf":
            hyper = ForestHyper(n_trees=self.rf_hyper.n_trees,
                                min_samples_leaf=self.rf_hyper.min_samples_leaf,
                                seed=seed)
            return fit_horizon(folds, horizon, hyper, self.rf_config)
        if self.kind == "icnn":
            tc = self.icnn_train
            return fit_zone_model(
                folds, self.icnn_config, hidden=self.icnn_hidden,
                train_cfg=TrainConfig(step_size=tc.step_size, epochs=tc.epochs,
                                      batch_size=tc.batch_size, seed=seed),
            )
        raise ValueError(f"unknown model kind {self.kind!r}")


@dataclass
class SampleEffCell:
    weeks: int
    model: str
    median: float
    p16: float
    p84: float
    n_reps: int

    def __post_init__(self):
        if not (self.p16 <= self.median <= self.p84):
            raise ValueError("percentiles out of order")


@dataclass
class SampleEffReport:
    sizes: list[int]
    models: list[str]
    reps: int
    seed: int
    horizon_seconds: float
    cells: list[SampleEffCell]
    raw_mse: dict = field(default_factory=dict)  # (weeks, model) -> list of per-rep MSE

    def cell(self, weeks: int, model: str) -> SampleEffCell:
        for c in self.cells:
            if c.weeks == weeks and c.model == model:
                return c
        raise KeyError((weeks, model))


def _study_repetition(args):
    ts, variants, sizes, horizon_seconds, seed, rep = args
    rep_seed = int(np.random.SeedSequence(entropy=(seed, rep)).generate_state(1)[0])
    out = {}
    for weeks in sizes:
        split = split_folds(ts, n_train_folds=weeks, seed=rep_seed + weeks)
        train = [fold_slice(ts, i) for i in sorted(split.train_fold_indices)]
        valid = [fold_slice(ts, i) for i in sorted(split.validation_fold_indices)]
        steps = horizon_steps(ts.step_seconds, horizon_seconds)
        for variant in variants:
            model = variant.fit(train, steps, seed=rep_seed)
            out[(weeks, variant.name)] = mse_openloop(model, valid, horizon_seconds)
    return rep, out


def sample_efficiency(
    ts: TimeSeries,
    variants: list[ModelVariant],
    sizes: list[int],
    reps: int,
    seed: int,
    horizon_seconds: float = 3600.0,
    jobs: int = 1,
) -> SampleEffReport:
    """Weekly-fold cross-validation repeated with fresh random splits.

    Every variant trains on the same folds within a repetition. Per-repetition
    seeds derive from a counter so results do not depend on scheduling.
    """
    tasks = [(ts, variants, sizes, horizon_seconds, seed, rep) for rep in range(reps)]
    if jobs > 1:
        import multiprocessing as mp
        # fork shares the dataset copy-on-write; per-repetition seeds are
        # counter-derived so the schedule cannot affect results
        ctx = mp.get_context("fork" if "fork" in mp.get_all_start_methods() else "spawn")
        with ctx.Pool(jobs) as pool:
            results = pool.map(_study_repetition, tasks)
    else:
        results = [_study_repetition(t) for t in tasks]
    results.sort(key=lambda r: r[0])

    raw: dict = {}
    for _, out in results:
        for key, value in out.items():
            raw.setdefault(key, []).append(value)

    cells = []
    for weeks in sizes:
        for variant in variants:
            values = np.array(raw[(weeks, variant.name)])
            cells.append(SampleEffCell(
                weeks=weeks, model=variant.name,
                median=float(np.median(values)),
                p16=float(np.percentile(values, 16)),
                p84=float(np.percentile(values, 84)),
                n_reps=len(values),
            ))
    return SampleEffReport(
        sizes=list(sizes), models=[v.name for v in variants], reps=reps, seed=seed,
        horizon_seconds=horizon_seconds, cells=cells,
        raw_mse={f"{w}:{m}": list(map(float, v)) for (w, m), v in raw.items()},
    )


# --- degree-day energy regressions -------------------------------------------

@dataclass
class DegreeDayRegression:
    theta_dd: float
    theta_sol: float
    intercept: float
    r_squared: float
    mode: str
    base_temp: float

    def predict(self, mean_amb, mean_ihor) -> np.ndarray:
        dd = self.degree_days(mean_amb)
        return self.theta_dd * dd + self.theta_sol * np.asarray(mean_ihor) + self.intercept

    def degree_days(self, mean_amb) -> np.ndarray:
        amb = np.asarray(mean_amb, dtype=float)
        return self.base_temp - amb if self.mode == "heating" else amb - self.base_temp

    @property
    def solar_ratio(self) -> float:
        """Coefficient ratio folding irradiance into solar degree days."""
        return self.theta_sol / self.theta_dd


def degree_day_regression(
    daily_energy, daily_mean_amb, daily_mean_ihor, mode: str = "heating",
    base_temp: float = 20.0,
) -> DegreeDayRegression:
    """Ordinary least squares of daily energy on degree days, daily mean
    irradiance and a constant; the constant absorbs the base temperature."""
    energy = np.asarray(daily_energy, dtype=float)
    amb = np.asarray(daily_mean_amb, dtype=float)
    ihor = np.asarray(daily_mean_ihor, dtype=float)
    if len(energy) < 10:
        raise TooShort("need at least 10 days")
    dd = base_temp - amb if mode == "heating" else amb - base_temp
    X = np.column_stack([dd, ihor, np.ones_like(dd)])
    rank = np.linalg.matrix_rank(X, tol=1e-8 * max(1.0, np.abs(X).max()))
    if rank < 3:
        raise SingularDesign("degree-day design matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(X, energy, rcond=None)
    resid = energy - X @ coef
    ss_tot = float(np.sum((energy - energy.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return DegreeDayRegression(
        theta_dd=float(coef[0]), theta_sol=float(coef[1]), intercept=float(coef[2]),
        r_squared=r2, mode=mode, base_temp=base_temp,
    )


@dataclass
class DailyAggregate:
    """Per-day quantities extracted from a closed-loop log."""

    energy_wh: np.ndarray
    mean_amb: np.ndarray
    mean_ihor: np.ndarray
    mean_room: np.ndarray
    kept: np.ndarray  # day indices that survived the exclusion rule


ROOM_MEAN_KEEP = (21.0, 27.0)


def daily_aggregates(log: TimeSeries, room_channels: list[str],
                     energy_channel: str = "q_total") -> DailyAggregate:
    """Whole-day sums/means; days whose mean room temperature falls outside
    the plausible comfort range are excluded (equipment-off artifacts)."""
    per_day = int(round(86400.0 / log.step_seconds))
    n_days = log.length // per_day
    if n_days < 1:
        raise TooShort("log shorter than one day")
    sl = slice(0, n_days * per_day)
    room = np.mean([log.channel(c)[sl].reshape(n_days, per_day) for c in room_channels], axis=0)
    energy = log.channel(energy_channel)[sl].reshape(n_days, per_day)
    amb = log.channel("t_amb")[sl].reshape(n_days, per_day)
    ihor = log.channel("i_hor")[sl].reshape(n_days, per_day)
    mean_room = room.mean(axis=1)
    # energy channels accumulate watt-minutes, whatever the sampling step
    keep = (mean_room >= ROOM_MEAN_KEEP[0]) & (mean_room <= ROOM_MEAN_KEEP[1])
    return DailyAggregate(
        energy_wh=energy.sum(axis=1)[keep] / 60.0,
        mean_amb=amb.mean(axis=1)[keep],
        mean_ihor=ihor.mean(axis=1)[keep],
        mean_room=mean_room[keep],
        kept=np.flatnonzero(keep),
    )


@dataclass
class EnergyComparison:
    mode: str
    regression_a: DegreeDayRegression
    regression_b: DegreeDayRegression
    mean_saving: float            # fractional saving of a relative to b
    mean_energy_a: float
    mean_energy_b: float
    solar_days: np.ndarray        # degree-solar-day axis for the curve
    curve_a: np.ndarray
    curve_b: np.ndarray
    mean_room_a: float
    mean_room_b: float


def compare_energy(days_a: DailyAggregate, days_b: DailyAggregate,
                   mode: str = "heating") -> EnergyComparison:
    """Fit a regression per controller, evaluate both on the pooled weather
    inputs, and report the mean relative saving of controller a."""
    reg_a = degree_day_regression(days_a.energy_wh, days_a.mean_amb, days_a.mean_ihor, mode)
    reg_b = degree_day_regression(days_b.energy_wh, days_b.mean_amb, days_b.mean_ihor, mode)
    amb = np.concatenate([days_a.mean_amb, days_b.mean_amb])
    ihor = np.concatenate([days_a.mean_ihor, days_b.mean_ihor])
    pred_a = np.maximum(0.0, reg_a.predict(amb, ihor))
    pred_b = np.maximum(0.0, reg_b.predict(amb, ihor))
    mean_a, mean_b = float(pred_a.mean()), float(pred_b.mean())
    # degree-solar-day axis uses the baseline's coefficient ratio
    dsd = reg_b.degree_days(amb) + reg_b.solar_ratio * ihor
    order = np.argsort(dsd)
    return EnergyComparison(
        mode=mode, regression_a=reg_a, regression_b=reg_b,
        mean_saving=1.0 - mean_a / mean_b if mean_b > 0 else 0.0,
        mean_energy_a=mean_a, mean_energy_b=mean_b,
        solar_days=dsd[order], curve_a=pred_a[order], curve_b=pred_b[order],
        mean_room_a=float(days_a.mean_room.mean()),
        mean_room_b=float(days_b.mean_room.mean()),
    )


# --- comfort -----------------------------------------------------------------

@dataclass
class ComfortReport:
    violation_kh: float
    max_violation_k: float
    fraction_in_violation: float


def comfort_violation(log: TimeSeries, schedule: ComfortSchedule,
                      room_channels: list[str]) -> ComfortReport:
    """Trapezoidal integral of bound exceedance over all listed rooms."""
    times = log.times()
    y_min, y_max = schedule.bounds_at(times)
    dt_h = log.step_seconds / 3600.0
    total = 0.0
    worst = 0.0
    in_violation = np.zeros(log.length, dtype=bool)
    for name in room_channels:
        temp = log.channel(name)
        exceed = np.maximum(0.0, temp - y_max) + np.maximum(0.0, y_min - temp)
        # trapezoid over uniform samples
        if len(exceed) > 1:
            trapezoid = getattr(np, "trapezoid", None) or np.trapz
            total += float(trapezoid(exceed, dx=dt_h))
        worst = max(worst, float(exceed.max(initial=0.0)))
        in_violation |= exceed > 0
    return ComfortReport(
        violation_kh=total,
        max_violation_k=worst,
        fraction_in_violation=float(in_violation.mean()) if log.length else 0.0,
    )


# --- solver resource benchmark ------------------------------------------------

@dataclass
class BenchResult:
    model: str
    mean_solve_seconds: float
    std_solve_seconds: float
    peak_rss_delta_mb: float


def bench_solvers(named_solvers: dict, repetitions: int = 20) -> list[BenchResult]:
    """Time repeated single optimizations with fixed inputs.

    ``named_solvers`` maps a label to a zero-argument callable performing one
    full solve (including any model-to-problem extraction work). Memory is
    the resident-set growth across the repetitions, coarse but comparable.
    """
    import psutil

    process = psutil.Process()
    results = []
    for name, solver in named_solvers.items():
        solver()  # warm caches outside the timed loop
        rss_before = process.memory_info().rss
        times = []
        peak = rss_before
        for _ in range(repetitions):
            t0 = time.perf_counter()
            solver()
            times.append(time.perf_counter() - t0)
            peak = max(peak, process.memory_info().rss)
        results.append(BenchResult(
            model=name,
            mean_solve_seconds=float(np.mean(times)),
            std_solve_seconds=float(np.std(times)),
            peak_rss_delta_mb=float(peak - rss_before) / 1e6,
        ))
    return results


def bench_scenario(ts: TimeSeries, roles, plant, horizon_steps: int):
    """Fixed initial conditions and disturbance forecast for the resource
    benchmark, taken from the tail of a logged series.

    Uses an upper-bound-only comfort schedule so every model family, the
    network one included, solves the same convex problem.
    """
    from .mpc import ControlHistory, Forecast, MpcConfig

    n_hist = 8
    if ts.length < n_hist + horizon_steps + 1:
        raise TooShort("series too short for the benchmark scenario")
    h0 = ts.length - horizon_steps - n_hist
    idx = np.arange(h0, h0 + n_hist)
    fore_idx = np.arange(h0 + n_hist, h0 + n_hist + horizon_steps)
    times = ts.times()
    history = ControlHistory(
        times=times[idx],
        y=ts.channel(roles.output)[idx],
        duty=ts.channel(roles.valve)[idx],
        amb=ts.channel(roles.ambient)[idx],
        nb=ts.channel(roles.neighbor)[idx],
        ihor=ts.channel(roles.irradiance)[idx],
        energy=ts.channel(roles.energy)[idx] if roles.energy in ts.channels else np.zeros(n_hist),
    )
    forecast = Forecast(
        times=times[fore_idx],
        amb=ts.channel(roles.ambient)[fore_idx],
        nb=np.full(horizon_steps, float(ts.channel(roles.neighbor)[idx][-1])),
        ihor=ts.channel(roles.irradiance)[fore_idx],
    )
    cfg = MpcConfig(
        horizon_steps=horizon_steps, r_input=1.0, lambda_slack=100.0,
        control_step_seconds=ts.step_seconds, mode="cooling",
        comfort=ComfortSchedule.constant(None, 24.0),
    )
    return history, forecast, cfg
