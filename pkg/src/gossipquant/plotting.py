"""Matplotlib rendering of error curves to image files (headless backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import MetricSeries


def plot_series(
    series_list: list[MetricSeries],
    path,
    title: str = "",
    xlabel: str = "edge activations",
    ylabel: str = "mean absolute error",
    logy: bool = True,
    logx: bool = False,
    hlines: dict[str, float] | None = None,
) -> None:
    """Mean curves with a +/- std band per series, written to ``path``.

    File format follows the extension (.png or .svg).  Non-finite values are
    dropped from the plot; the band is clipped away from zero on log axes.
    """
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for series in series_list:
        x = np.asarray(series.activations, dtype=float)
        mean = np.asarray(series.mean, dtype=float)
        std = np.asarray(series.std, dtype=float)
        ok = np.isfinite(mean)
        x, mean, std = x[ok], mean[ok], std[ok]
        if len(x) == 0:
            continue
        if logx:
            keep = x > 0
            x, mean, std = x[keep], mean[keep], std[keep]
        line, = ax.plot(x, mean, label=series.label, linewidth=1.4)
        lo = mean - std
        hi = mean + std
        if logy:
            lo = np.maximum(lo, np.maximum(mean * 1e-3, 1e-300))
        ax.fill_between(x, lo, hi, alpha=0.18, color=line.get_color(), linewidth=0)
    for label, value in (hlines or {}).items():
        ax.axhline(value, linestyle="--", color="gray", linewidth=1.0)
        ax.annotate(label, xy=(0.02, value), xycoords=("axes fraction", "data"),
                    fontsize=8, va="bottom", color="gray")
    if logy:
        ax.set_yscale("log")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=9)
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_bound_check(rows, path, title: str = "") -> None:
    """Scatter of Monte-Carlo deviation frequencies against the evaluated
    bounds; everything at or below the diagonal is a satisfied bound."""
    fig, ax = plt.subplots(figsize=(5.4, 4.2))
    freqs = [r["frequency"] + r["ci_half_width"] for r in rows]
    bounds = [r["hoeffding"] for r in rows]
    ax.scatter(bounds, freqs, s=18, alpha=0.7)
    limit = max(max(bounds, default=1.0), max(freqs, default=1.0), 1e-6)
    grid = np.geomspace(1e-6, max(limit, 1e-5), 50)
    ax.plot(grid, grid, "k--", linewidth=1.0)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("exponential bound")
    ax.set_ylabel("empirical frequency + CI")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
