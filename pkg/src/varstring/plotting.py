"""Figures for the CLI report path (written to files, never shown)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

params = {
    "font.size": 9,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "figure.figsize": (4.8, 3.4),
    "figure.dpi": 150,
    "savefig.bbox": "tight",
}

# PNG metadata without version or date keeps identical runs byte-identical
_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, format="png", metadata=_META)
    plt.close(fig)


def plot_errors(path, epsilons, series: dict, slopes: dict | None = None, ylabel="sup error on window"):
    """Log-log curves of per-eps quantities with their fitted slopes in the legend."""
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        eps = np.asarray(epsilons, dtype=float)
        for name, values in series.items():
            v = np.asarray(values, dtype=float)
            fit = (slopes or {}).get(name) or {}
            label = name if fit.get("slope") is None else f"{name} (slope {fit['slope']:.2f})"
            ax.loglog(eps, v, "o-", label=label)
        ax.set_xlabel(r"$\varepsilon$")
        ax.set_ylabel(ylabel)
        ax.legend()
        ax.grid(True, which="both", alpha=0.3)
        _save(fig, path)


def plot_profiles(path, x, curves: dict, t: float):
    """Profiles v0, v1, v2, ... against x at one time."""
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        for name, y in curves.items():
            ax.plot(x, y, label=name)
        ax.set_xlabel("x")
        ax.set_title(f"t = {t:g}")
        ax.legend()
        ax.grid(True, alpha=0.3)
        _save(fig, path)


__all__ = ["plot_errors", "plot_profiles", "params"]
