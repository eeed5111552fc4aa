"""Error-series containers, checkpoint grids, and delimited output."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass
class MetricSeries:
    """Error statistics along a run.

    For a single trial the mean/std are taken across nodes; aggregated series
    hold mean/std of the per-trial node means across trials.  ``meta`` carries
    run metadata (seed, step size, config hash, divergence flag).
    """

    label: str
    activations: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.activations = np.asarray(self.activations, dtype=np.int64)
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.asarray(self.std, dtype=float)
        if not (len(self.activations) == len(self.mean) == len(self.std)):
            raise ValueError("checkpoint columns must have equal length")
        if np.any(np.diff(self.activations) <= 0):
            raise ValueError("activation counts must be strictly increasing")

    @property
    def diverged(self) -> bool:
        return bool(self.meta.get("diverged", False))

    @property
    def final_mean(self) -> float:
        return float(self.mean[-1])


def checkpoint_grid(budget: int, points: int = 60, eval_every: int | None = None) -> np.ndarray:
    """Strictly increasing activation counts at which error is recorded.

    Defaults to roughly geometric spacing (cheap on long runs); pass
    ``eval_every`` for a uniform grid instead.  Always starts at 0 and ends
    at ``budget``.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    if budget == 0:
        return np.array([0], dtype=np.int64)
    if eval_every is not None:
        if eval_every <= 0:
            raise ValueError("eval_every must be positive")
        grid = np.arange(0, budget + 1, eval_every, dtype=np.int64)
        if grid[-1] != budget:
            grid = np.append(grid, budget)
        return grid
    raw = np.unique(np.rint(np.geomspace(1, budget, points)).astype(np.int64))
    return np.concatenate(([0], raw[raw >= 1]))


def aggregate_series(trials: list[MetricSeries], label: str | None = None) -> MetricSeries:
    """Mean/std across trials of the per-trial mean curves (grids must match)."""
    if not trials:
        raise ValueError("no trials to aggregate")
    grid = trials[0].activations
    for s in trials[1:]:
        if not np.array_equal(s.activations, grid):
            raise ValueError("trial checkpoint grids differ")
    stacked = np.vstack([s.mean for s in trials])
    meta = {
        "trials": len(trials),
        "diverged": any(s.diverged for s in trials),
    }
    return MetricSeries(
        label=label if label is not None else trials[0].label,
        activations=grid.copy(),
        mean=stacked.mean(axis=0),
        std=stacked.std(axis=0),
        meta=meta,
    )


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_rows_csv(path, header: list[str], rows) -> None:
    """Write rows with shortest-roundtrip float formatting (byte-stable reruns)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_curves_csv(path, per_trial: dict[str, list[MetricSeries]]) -> None:
    """Long-format per-trial curves: algorithm, trial, activation, mae."""
    rows = []
    for label in sorted(per_trial):
        for trial, series in enumerate(per_trial[label]):
            for act, err in zip(series.activations, series.mean):
                rows.append((label, trial, int(act), err))
    write_rows_csv(path, ["algorithm", "trial", "activation", "mae"], rows)


def write_summary_csv(path, aggregates: list[MetricSeries]) -> None:
    """Aggregated curves: algorithm, activation, mean, std."""
    rows = []
    for series in sorted(aggregates, key=lambda s: s.label):
        for act, m, s in zip(series.activations, series.mean, series.std):
            rows.append((series.label, int(act), m, s))
    write_rows_csv(path, ["algorithm", "activation", "mean", "std"], rows)
