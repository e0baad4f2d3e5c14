"""Figure rendering for experiment reports.

Each run_experiment call saves PNG figures next to its CSV tables; plotting
never affects the numeric outputs and can be switched off in the config.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def time_series_figure(path, times, series: dict, ylabel: str, title: str, yerr: dict | None = None):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for name, vals in series.items():
        if yerr and name in yerr:
            ax.errorbar(times, vals, yerr=yerr[name], marker="o", ms=3, capsize=2, label=name)
        else:
            ax.plot(times, vals, marker="o", ms=3, label=name)
    ax.set_xlabel("time / mean free time")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(series) > 1:
        ax.legend(frameon=False)
    _save(fig, path)


def scan_figure(path, x, series: dict, xlabel: str, ylabel: str, title: str,
                loglog: bool = True, yerr: dict | None = None):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for name, vals in series.items():
        err = yerr.get(name) if yerr else None
        if loglog:
            pos = [(xi, vi) for xi, vi in zip(x, vals) if vi > 0]
            if pos:
                ax.loglog([p[0] for p in pos], [p[1] for p in pos], marker="o", label=name)
        elif err is not None:
            ax.errorbar(x, vals, yerr=err, marker="o", capsize=2, label=name)
        else:
            ax.plot(x, vals, marker="o", label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(frameon=False)
    _save(fig, path)


def histogram_figure(path, centers, series: dict, xlabel: str, title: str):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for name, vals in series.items():
        ax.step(centers, vals, where="mid", label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("marginal density")
    ax.set_title(title)
    ax.legend(frameon=False)
    _save(fig, path)
