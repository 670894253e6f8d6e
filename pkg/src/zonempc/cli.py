"""Command-line entry point.

Subcommands: simulate, train, mpc-run, sample-efficiency, evaluate, bench.
All randomness flows from --seed; identical invocations produce byte-identical
CSV outputs. Report subcommands render SVG figures next to their delimited
output unless --no-plots is given.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .armax import ArmaxModel, fit as fit_armax
from .errors import ConfigError, UsageError, ZonempcError
from .features import (
    ACTUATOR_ENERGY,
    ACTUATOR_OPTIONS,
    ChannelRoles,
    RegressorConfig,
)
from .forest import ForestDataConfig, ForestHyper, ForestModelSet, fit_horizon
from .icnn import IcnnDataConfig, IcnnZoneModel, TrainConfig, fit_zone_model
from .mpc import ComfortSchedule, ForecastNoise, MpcConfig, closed_loop
from .plant import MODE_COOLING, MODE_HEATING, generate_dataset, load_plant
from .timeseries import TimeSeries, load_csv, resample, save_csv
from .weather import ClimateConfig
from . import evaluation


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def infer_schema(path) -> dict[str, str]:
    """Unit map for the canonical simulator channel names."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if not header or header[0] != "timestamp":
        raise ConfigError(f"{path}: first column must be 'timestamp'")
    schema = {}
    for name in header[1:]:
        if name.startswith("temp_") or name in ("t_amb", "t_sup"):
            schema[name] = "degC"
        elif name.startswith("valve_"):
            schema[name] = "frac"
        elif name.startswith("q_"):
            schema[name] = "W"
        elif name == "i_hor":
            schema[name] = "W/m2"
        else:
            raise ConfigError(f"{path}: unknown channel {name!r}")
    return schema


def load_series(path) -> TimeSeries:
    return load_csv(path, infer_schema(path))


def _parse_start(text: str) -> datetime:
    t = datetime.fromisoformat(text)
    return t.replace(tzinfo=timezone.utc) if t.tzinfo is None else t.astimezone(timezone.utc)


def _load_climate(path) -> ClimateConfig | None:
    if path is None:
        return None
    with open(path) as fh:
        return ClimateConfig.from_dict(json.load(fh))


def zone_roles(zone: str, neighbor: str) -> ChannelRoles:
    return ChannelRoles(
        output=f"temp_{zone}", neighbor=f"temp_{neighbor}", ambient="t_amb",
        irradiance="i_hor", valve=f"valve_{zone}", supply="t_sup",
        energy=f"q_alloc_{zone}",
    )


def _zone_pair(ts: TimeSeries, zone: str) -> tuple[str, str]:
    zones = [c[len("temp_"):] for c in ts.channels if c.startswith("temp_")]
    if zone not in zones:
        raise ConfigError(f"zone {zone!r} not in data (have {zones})")
    others = [z for z in zones if z != zone]
    return zone, (others[0] if others else zone)


def _write_json(doc: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path) as fh:
        kind = json.load(fh).get("kind")
    if kind == "armax":
        return ArmaxModel.load(path)
    if kind == "rf":
        return ForestModelSet.load(path)
    if kind == "icnn":
        return IcnnZoneModel.load(path)
    raise ConfigError(f"{path}: unknown model kind {kind!r}")


# --- subcommands --------------------------------------------------------------

def cmd_simulate(args) -> int:
    plant = load_plant(args.plant)
    ts = generate_dataset(
        plant, args.controller, days=args.days, seed=args.seed, mode=args.mode,
        setpoint=args.setpoint, band=args.band, prbs_hold_minutes=args.prbs_hold,
        climate=_load_climate(args.climate), start=_parse_start(args.start),
        noise_std=args.noise_std,
    )
    save_csv(ts, args.out)
    print(f"wrote {args.out} ({ts.length} rows, {len(ts.channels)} channels)")
    return 0


def cmd_train(args) -> int:
    raw = load_series(args.data)
    ts = resample(raw, args.step_seconds) if raw.step_seconds != args.step_seconds else raw
    zone, neighbor = _zone_pair(ts, args.zone)
    roles = zone_roles(zone, neighbor)
    plant = load_plant(args.plant)

    if args.model in ("armax", "armax-free"):
        cfg = RegressorConfig(
            delta=args.delta, tau=args.tau, actuator_option=args.actuator,
            roles=roles, latitude=plant.latitude, longitude=plant.longitude,
        )
        model = fit_armax(ts, cfg, nonneg=(args.model == "armax"))
        model.save(args.out)
        print(f"wrote {args.out} ({len(model.theta)} coefficients, "
              f"residual {model.stats.residual_norm:.4g})")
    elif args.model == "rf":
        cfg = ForestDataConfig(roles=roles, actuator_option=args.actuator, n_lag=args.n_lag)
        hyper = ForestHyper(n_trees=args.trees, min_samples_leaf=args.min_leaf, seed=args.seed)
        model = fit_horizon(ts, args.horizon_steps, hyper, cfg)
        npz = Path(args.out).with_suffix(".npz")
        model.save(args.out, npz)
        print(f"wrote {args.out} + {npz} ({args.horizon_steps} step models)")
    elif args.model in ("ficnn", "picnn"):
        cfg = IcnnDataConfig(roles=roles, actuator_option=args.actuator,
                             n_lag=args.n_lag, mode=args.model)
        hidden = tuple(int(w) for w in args.hidden.split(","))
        model = fit_zone_model(
            ts, cfg, hidden=hidden, relu_offset=args.relu_offset,
            train_cfg=TrainConfig(step_size=args.lr, epochs=args.epochs,
                                  batch_size=args.batch, seed=args.seed),
        )
        model.save(args.out)
        print(f"wrote {args.out} (final training loss {model.net.final_loss:.4g})")
    else:
        raise ConfigError(f"unknown model {args.model!r}")
    return 0


def cmd_mpc_run(args) -> int:
    plant = load_plant(args.plant)
    cfg = MpcConfig.load(args.config)
    model_paths = args.model.split(",")
    if len(model_paths) == 1 and plant.n_zones > 1:
        raise ConfigError(f"need {plant.n_zones} comma-separated models, one per zone")
    models = [load_model(p) for p in model_paths]
    noise = ForecastNoise(amb_std=args.amb_noise_std) if args.amb_noise_std > 0 else None
    log, summary = closed_loop(
        plant, models, cfg, days=args.days, seed=args.seed,
        climate=_load_climate(args.climate), start=_parse_start(args.start),
        forecast_noise=noise,
    )
    save_csv(log, args.out)
    room = [f"temp_{z.name}" for z in plant.zones]
    comfort = evaluation.comfort_violation(log, cfg.comfort, room)
    summary["violation_kh"] = comfort.violation_kh
    summary["max_violation_k"] = comfort.max_violation_k
    summary["fraction_in_violation"] = comfort.fraction_in_violation
    summary_path = args.summary or str(Path(args.out).with_suffix(".summary.json"))
    _write_json(summary, summary_path)
    if not args.no_plots:
        from . import plots
        valves = [f"valve_{z.name}" for z in plant.zones]
        plots.save_trajectory_figure(log, cfg.comfort, room, valves,
                                     str(Path(args.out).with_suffix(".svg")))
    print(f"wrote {args.out} ({summary['energy_wmin_total'] / 60e3:.2f} kWh, "
          f"violations {comfort.violation_kh:.3f} K·h)")
    return 0


VARIANT_NAMES = ("armax", "armax-free", "armax-valve", "armax-valve-dt", "rf", "ficnn", "picnn")


def build_variants(names, roles: ChannelRoles, plant, args) -> list[evaluation.ModelVariant]:
    def acfg(actuator):
        return RegressorConfig(delta=args.delta, tau=args.tau, actuator_option=actuator,
                               roles=roles, latitude=plant.latitude, longitude=plant.longitude)

    variants = []
    for name in names:
        if name == "armax":
            variants.append(evaluation.ModelVariant(name=name, kind="armax",
                                                    armax_config=acfg(ACTUATOR_ENERGY)))
        elif name == "armax-free":
            variants.append(evaluation.ModelVariant(name=name, kind="armax",
                                                    armax_config=acfg(ACTUATOR_ENERGY), nonneg=False))
        elif name == "armax-valve":
            variants.append(evaluation.ModelVariant(name=name, kind="armax",
                                                    armax_config=acfg("valve_only")))
        elif name == "armax-valve-dt":
            variants.append(evaluation.ModelVariant(name=name, kind="armax",
                                                    armax_config=acfg("valve_times_dT")))
        elif name == "rf":
            variants.append(evaluation.ModelVariant(
                name=name, kind="rf",
                rf_config=ForestDataConfig(roles=roles, actuator_option=ACTUATOR_ENERGY, n_lag=args.n_lag),
                rf_hyper=ForestHyper(n_trees=args.trees, min_samples_leaf=args.min_leaf),
            ))
        elif name in ("ficnn", "picnn"):
            variants.append(evaluation.ModelVariant(
                name=name, kind="icnn",
                icnn_config=IcnnDataConfig(roles=roles, actuator_option=ACTUATOR_ENERGY,
                                           n_lag=args.n_lag, mode=name),
                icnn_hidden=tuple(int(w) for w in args.hidden.split(",")),
                icnn_train=TrainConfig(step_size=args.lr, epochs=args.epochs, batch_size=args.batch),
            ))
        else:
            raise ConfigError(f"unknown model variant {name!r} (choose from {VARIANT_NAMES})")
    return variants


def cmd_sample_efficiency(args) -> int:
    raw = load_series(args.data)
    ts = resample(raw, args.step_seconds) if raw.step_seconds != args.step_seconds else raw
    zone, neighbor = _zone_pair(ts, args.zone)
    plant = load_plant(args.plant)
    variants = build_variants(args.models.split(","), zone_roles(zone, neighbor), plant, args)
    sizes = [int(s) for s in args.sizes.split(",")]
    report = evaluation.sample_efficiency(
        ts, variants, sizes=sizes, reps=args.reps, seed=args.seed,
        horizon_seconds=args.horizon_hours * 3600.0, jobs=args.jobs,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = out_dir / "sample_efficiency.csv"
    with open(table, "w", newline="\n") as fh:
        fh.write("weeks,model,median_mse,p16_mse,p84_mse,n_reps\n")
        for c in report.cells:
            fh.write(f"{c.weeks},{c.model},{c.median:.10g},{c.p16:.10g},{c.p84:.10g},{c.n_reps}\n")
    _write_json({"sizes": report.sizes, "models": report.models, "reps": report.reps,
                 "seed": report.seed, "raw_mse": report.raw_mse},
                out_dir / "sample_efficiency.json")
    if not args.no_plots:
        from . import plots
        plots.save_sample_efficiency_figure(report, out_dir / "sample_efficiency.svg")
    print(f"wrote {table}")
    for c in report.cells:
        print(f"  {c.weeks}w {c.model:14s} median {c.median:.4f} [{c.p16:.4f}, {c.p84:.4f}]")
    return 0


def cmd_evaluate(args) -> int:
    log_mpc = load_series(args.mpc)
    log_base = load_series(args.baseline)
    room = sorted(c for c in log_mpc.channels if c.startswith("temp_"))
    days_mpc = evaluation.daily_aggregates(log_mpc, room)
    days_base = evaluation.daily_aggregates(log_base, room)
    cmp = evaluation.compare_energy(days_mpc, days_base, mode=args.mode)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "daily_energy.csv", "w", newline="\n") as fh:
        fh.write("controller,day,energy_wh,mean_amb,mean_ihor,mean_room\n")
        for label, agg in (("mpc", days_mpc), ("baseline", days_base)):
            for i in range(len(agg.energy_wh)):
                fh.write(f"{label},{agg.kept[i]},{agg.energy_wh[i]:.10g},"
                         f"{agg.mean_amb[i]:.10g},{agg.mean_ihor[i]:.10g},{agg.mean_room[i]:.10g}\n")
    summary = {
        "mode": cmp.mode,
        "mean_saving": cmp.mean_saving,
        "mean_energy_mpc_wh": cmp.mean_energy_a,
        "mean_energy_baseline_wh": cmp.mean_energy_b,
        "mean_room_mpc": cmp.mean_room_a,
        "mean_room_baseline": cmp.mean_room_b,
        "r_squared_mpc": cmp.regression_a.r_squared,
        "r_squared_baseline": cmp.regression_b.r_squared,
    }
    if args.config:
        cfg = MpcConfig.load(args.config)
        comfort = evaluation.comfort_violation(log_mpc, cfg.comfort, room)
        summary["violation_kh"] = comfort.violation_kh
        summary["max_violation_k"] = comfort.max_violation_k
    _write_json(summary, out_dir / "energy_summary.json")
    if not args.no_plots:
        from . import plots
        plots.save_energy_figure(cmp, days_mpc, days_base, out_dir / "energy_regression.svg")
    print(f"mean saving: {100 * cmp.mean_saving:.1f}%  "
          f"(room mean mpc {cmp.mean_room_a:.2f} vs baseline {cmp.mean_room_b:.2f})")
    return 0


def cmd_bench(args) -> int:
    from .mpc import build_qp, solve_icnn_mpc, solve_linear_mpc
    raw = load_series(args.data)
    ts = resample(raw, args.step_seconds) if raw.step_seconds != args.step_seconds else raw
    zone, neighbor = _zone_pair(ts, args.zone)
    roles = zone_roles(zone, neighbor)
    plant = load_plant(args.plant)

    acfg = RegressorConfig(delta=args.delta, tau=args.tau, actuator_option="valve_only",
                           roles=roles, latitude=plant.latitude, longitude=plant.longitude)
    armax_model = fit_armax(ts, acfg, nonneg=True)
    rf_model = fit_horizon(ts, args.horizon_steps,
                           ForestHyper(n_trees=args.trees, min_samples_leaf=args.min_leaf,
                                       seed=args.seed),
                           ForestDataConfig(roles=roles, actuator_option="valve_only",
                                            n_lag=args.n_lag))
    icnn_model = fit_zone_model(
        ts, IcnnDataConfig(roles=roles, actuator_option="valve_only", n_lag=args.n_lag,
                           mode="picnn"),
        hidden=tuple(int(w) for w in args.hidden.split(",")),
        train_cfg=TrainConfig(step_size=args.lr, epochs=args.epochs, batch_size=args.batch,
                              seed=args.seed),
    )

    # fixed scenario from the tail of the data
    from .evaluation import bench_scenario
    history, forecast, cfg = bench_scenario(ts, roles, plant, args.horizon_steps)
    t_sup = plant.supply_temperature(cfg.mode)
    solvers = {
        "armax": lambda: solve_linear_mpc(armax_model, history, forecast, cfg, t_sup),
        "rf": lambda: solve_linear_mpc(rf_model, history, forecast, cfg, t_sup),
        "picnn": lambda: solve_icnn_mpc(icnn_model, history, forecast, cfg, t_sup,
                                        seed=args.seed),
    }
    results = evaluation.bench_solvers(solvers, repetitions=args.reps)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "bench.csv", "w", newline="\n") as fh:
        fh.write("model,mean_solve_seconds,std_solve_seconds,peak_rss_delta_mb\n")
        for r in results:
            fh.write(f"{r.model},{r.mean_solve_seconds:.6g},{r.std_solve_seconds:.6g},"
                     f"{r.peak_rss_delta_mb:.6g}\n")
    if not args.no_plots:
        from . import plots
        plots.save_bench_figure(results, out_dir / "bench.svg")
    for r in results:
        print(f"  {r.model:8s} {r.mean_solve_seconds * 1e3:9.2f} ms  "
              f"rss +{r.peak_rss_delta_mb:.1f} MB")
    return 0


# --- argument wiring -----------------------------------------------------------

def _add_common_train_args(p):
    p.add_argument("--plant", default=None, help="plant JSON (defaults to the packaged one)")
    p.add_argument("--zone", default="zone1")
    p.add_argument("--actuator", default=ACTUATOR_ENERGY, choices=ACTUATOR_OPTIONS)
    p.add_argument("--step-seconds", type=float, default=1800.0)
    p.add_argument("--delta", type=int, default=3)
    p.add_argument("--tau", type=int, default=9)
    p.add_argument("--n-lag", type=int, default=2)
    p.add_argument("--trees", type=int, default=200)
    p.add_argument("--min-leaf", type=int, default=200)
    p.add_argument("--hidden", default="20,20")
    p.add_argument("--relu-offset", type=float, default=0.0)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)


def make_parser() -> _Parser:
    parser = _Parser(prog="zonempc", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="closed-loop plant data generation")
    p.add_argument("--plant", default=None)
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--controller", default="hysteresis", choices=["hysteresis", "prbs"])
    p.add_argument("--mode", default=MODE_HEATING, choices=[MODE_HEATING, MODE_COOLING])
    p.add_argument("--climate", default=None, help="climate JSON")
    p.add_argument("--start", default="2021-01-01")
    p.add_argument("--setpoint", type=float, default=23.0)
    p.add_argument("--band", type=float, default=1.0)
    p.add_argument("--prbs-hold", type=int, default=90)
    p.add_argument("--noise-std", type=float, default=0.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit a model from a simulation log")
    p.add_argument("--model", required=True,
                   choices=["armax", "armax-free", "rf", "ficnn", "picnn"])
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--horizon-steps", type=int, default=14, help="per-step forest count")
    _add_common_train_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("mpc-run", help="closed-loop receding-horizon episode")
    p.add_argument("--model", required=True, help="model JSON path(s), comma separated per zone")
    p.add_argument("--plant", default=None)
    p.add_argument("--config", required=True, help="MPC config JSON")
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--summary", default=None)
    p.add_argument("--climate", default=None)
    p.add_argument("--start", default="2021-01-01")
    p.add_argument("--amb-noise-std", type=float, default=0.0)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_mpc_run)

    p = sub.add_parser("sample-efficiency", help="cross-validated accuracy vs training size")
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--models", default="armax,rf,picnn")
    p.add_argument("--sizes", default="1,2,4,8")
    p.add_argument("--reps", type=int, default=25)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--horizon-hours", type=float, default=1.0)
    p.add_argument("--no-plots", action="store_true")
    _add_common_train_args(p)
    p.set_defaults(func=cmd_sample_efficiency)

    p = sub.add_parser("evaluate", help="energy comparison of two closed-loop logs")
    p.add_argument("--mpc", required=True)
    p.add_argument("--baseline", required=True)
    p.add_argument("--mode", default=MODE_HEATING, choices=[MODE_HEATING, MODE_COOLING])
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", default=None, help="MPC config JSON for comfort metrics")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="single-solve time and memory per model family")
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--horizon-steps", type=int, default=12)
    p.add_argument("--no-plots", action="store_true")
    _add_common_train_args(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ZonempcError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def entrypoint():
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
