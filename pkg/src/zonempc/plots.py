"""Report figures rendered to files next to the delimited output.

SVG output is made byte-reproducible: fixed hash salt for element ids and no
embedded creation date.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "zonempc"

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import EnergyComparison, SampleEffReport
from .mpc import ComfortSchedule
from .timeseries import TimeSeries

_SAVE_KW = {"metadata": {"Date": None}, "bbox_inches": "tight"}


def save_sample_efficiency_figure(report: SampleEffReport, path) -> None:
    """Median open-loop MSE versus training weeks with 16-84 percentile
    bands, one line per model."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name in report.models:
        weeks = np.array(report.sizes, dtype=float)
        med = np.array([report.cell(w, name).median for w in report.sizes])
        lo = np.array([report.cell(w, name).p16 for w in report.sizes])
        hi = np.array([report.cell(w, name).p84 for w in report.sizes])
        line, = ax.plot(weeks, med, marker="o", label=name)
        ax.fill_between(weeks, lo, hi, alpha=0.2, color=line.get_color())
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("training data [weeks]")
    ax.set_ylabel(f"{report.horizon_seconds / 3600:.0f}-hour open-loop MSE [K$^2$]")
    ax.set_xticks(report.sizes)
    ax.set_xticklabels([str(s) for s in report.sizes])
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_energy_figure(cmp: EnergyComparison, days_a, days_b, path,
                       label_a: str = "mpc", label_b: str = "baseline") -> None:
    """Daily energy against degree solar days: scatter per controller plus
    the fitted regression curves."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    reg_b = cmp.regression_b
    dsd_a = reg_b.degree_days(days_a.mean_amb) + reg_b.solar_ratio * days_a.mean_ihor
    dsd_b = reg_b.degree_days(days_b.mean_amb) + reg_b.solar_ratio * days_b.mean_ihor
    ax.scatter(dsd_b, days_b.energy_wh / 1000.0, s=14, color="tab:blue", label=label_b)
    ax.scatter(dsd_a, days_a.energy_wh / 1000.0, s=14, color="tab:orange", label=label_a)
    ax.plot(cmp.solar_days, cmp.curve_b / 1000.0, color="tab:blue")
    ax.plot(cmp.solar_days, cmp.curve_a / 1000.0, color="tab:orange")
    kind = "heating" if cmp.mode == "heating" else "cooling"
    ax.set_xlabel(f"{kind} degree solar days [K·day]")
    ax.set_ylabel(f"daily {kind} energy [kWh]")
    ax.set_title(f"mean saving {100 * cmp.mean_saving:.1f}%")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_trajectory_figure(log: TimeSeries, schedule: ComfortSchedule | None,
                           room_channels: list[str], valve_channels: list[str],
                           path) -> None:
    """Four panels: room temperatures with comfort bounds, applied duty,
    ambient temperature, solar irradiance."""
    hours = (log.times() - log.times()[0]) / 3600.0
    fig, axes = plt.subplots(4, 1, figsize=(8.0, 8.0), sharex=True)
    for name in room_channels:
        axes[0].plot(hours, log.channel(name), label=name, lw=0.9)
    if schedule is not None:
        y_min, y_max = schedule.bounds_at(log.times())
        for arr in (y_min, y_max):
            finite = np.where(np.isfinite(arr), arr, np.nan)
            axes[0].plot(hours, finite, "k--", lw=0.8)
    axes[0].set_ylabel("room [°C]")
    axes[0].legend(loc="upper right", fontsize=8)
    for name in valve_channels:
        axes[1].plot(hours, log.channel(name), lw=0.6, label=name)
    axes[1].set_ylabel("valve duty")
    axes[1].set_ylim(-0.05, 1.05)
    axes[2].plot(hours, log.channel("t_amb"), color="tab:green", lw=0.9)
    axes[2].set_ylabel("ambient [°C]")
    axes[3].plot(hours, log.channel("i_hor"), color="tab:red", lw=0.9)
    axes[3].set_ylabel("irradiance [W/m$^2$]")
    axes[3].set_xlabel("time [h]")
    for ax in axes:
        ax.grid(True, alpha=0.3)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_bench_figure(results, path) -> None:
    """Mean solve time per model family, log scale."""
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    names = [r.model for r in results]
    times = [r.mean_solve_seconds for r in results]
    ax.bar(names, times, color=["tab:green", "tab:orange", "tab:blue"][: len(names)])
    ax.set_yscale("log")
    ax.set_ylabel("mean solve time [s]")
    ax.grid(True, axis="y", alpha=0.3)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
