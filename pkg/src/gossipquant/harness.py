"""Experiment protocol: data generation, exact targets, and trial orchestration.

Every experiment is a pure function of its config, including the master seed.
Named substreams (topology, data, per-trial assignment / edge sampling / step
size) are split off the master seed so changing one knob never perturbs the
others.  All algorithms within a trial share the same activation sequence and
the same step-size draw, which keeps comparisons paired.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import consensus
from .graph import Graph, build_topology, edge_probabilities, sample_edge_stream, spectral_summary
from .metrics import MetricSeries, aggregate_series, checkpoint_grid
from .objectives import euclidean_family, pinball_family
from .ranktrim import (
    DepthQuantileState,
    DepthTrimRule,
    GoTrimState,
    QuantileTrimRule,
    RankTrimRule,
    exact_l2_depths,
    exact_trimmed_mean,
    gotrim_step,
    oracle_trim_weights,
    weight_error,
)

_STREAM_TOPOLOGY = 0
_STREAM_DATA = 1
_STREAM_ASSIGN = 2
_STREAM_EDGES = 3
_STREAM_RHO = 4

_TIE_RETRIES = 50


class NonUniqueTargetError(ValueError):
    """The requested statistic is not a single point for this sample size."""


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent, reproducible generator for a named stream of the experiment."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(key)))


# ---------------------------------------------------------------------------
# Data generators
# ---------------------------------------------------------------------------

def contaminated_gaussian(
    n: int,
    contamination: float,
    rng: np.random.Generator,
    clean_loc: float = 10.0,
    clean_scale: float = 3.0,
    outlier_loc: float = 30.0,
    outlier_scale: float = 5.0,
) -> tuple[np.ndarray, np.ndarray]:
    """1-D sample with exactly floor(contamination * n) outlying draws.

    The deterministic contamination count keeps the sample quantiles stable
    across trials.  Returns (values, clean_mask).
    """
    if not 0.0 <= contamination < 1.0:
        raise ValueError("contamination must lie in [0, 1)")
    n_out = int(math.floor(contamination * n + 1e-9))
    for _ in range(_TIE_RETRIES):
        clean = rng.normal(clean_loc, clean_scale, size=n - n_out)
        outliers = rng.normal(outlier_loc, outlier_scale, size=n_out)
        values = np.concatenate([clean, outliers])
        if len(np.unique(values)) == n:
            mask = np.zeros(n, dtype=bool)
            mask[: n - n_out] = True
            return values, mask
    raise RuntimeError("could not draw a tie-free sample")


def cauchy_sample(
    n: int, rng: np.random.Generator, loc: float = 10.0, scale: float = 10.0
) -> tuple[np.ndarray, np.ndarray]:
    for _ in range(_TIE_RETRIES):
        values = loc + scale * rng.standard_cauchy(size=n)
        if len(np.unique(values)) == n:
            return values, np.ones(n, dtype=bool)
    raise RuntimeError("could not draw a tie-free sample")


def contaminated_gaussian_2d(
    n: int,
    contamination: float,
    rng: np.random.Generator,
    mean=(10.0, 10.0),
    cov=((5.0, 3.0), (3.0, 5.0)),
    arc_radius: float = 30.0,
    arc_span=(0.0, math.pi / 2.0),
) -> tuple[np.ndarray, np.ndarray]:
    """2-D Gaussian cloud plus outliers on a circular arc around the mean.

    The arc covers only part of the circle so the outliers actually bias the
    mean (a full ring would cancel itself).
    """
    if not 0.0 <= contamination < 1.0:
        raise ValueError("contamination must lie in [0, 1)")
    mean = np.asarray(mean, dtype=float)
    n_out = int(math.floor(contamination * n + 1e-9))
    clean = rng.multivariate_normal(mean, np.asarray(cov, dtype=float), size=n - n_out)
    angles = rng.uniform(arc_span[0], arc_span[1], size=n_out)
    ring = mean[None, :] + arc_radius * np.column_stack([np.cos(angles), np.sin(angles)])
    points = np.vstack([clean, ring])
    mask = np.zeros(n, dtype=bool)
    mask[: n - n_out] = True
    return points, mask


def generate_data(spec: dict, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Dispatch on spec["kind"]; returns (observations, clean_mask)."""
    kind = spec.get("kind", "contaminated_gaussian")
    params = {k: v for k, v in spec.items() if k != "kind"}
    if kind == "contaminated_gaussian":
        return contaminated_gaussian(n, rng=rng, **params)
    if kind == "cauchy":
        return cauchy_sample(n, rng=rng, **params)
    if kind == "contaminated_gaussian_2d":
        return contaminated_gaussian_2d(n, rng=rng, **params)
    raise ValueError(f"unknown data kind: {kind!r}")


# ---------------------------------------------------------------------------
# Exact-answer oracles
# ---------------------------------------------------------------------------

def exact_quantile(data, alpha: float) -> float:
    """The unique pinball-sum minimizer: the ceil(alpha n)-th order statistic.

    Raises when alpha * n is an integer, in which case the minimizer is a
    whole interval between order statistics.
    """
    data = np.sort(np.asarray(data, dtype=float))
    n = len(data)
    pos = alpha * n
    if abs(pos - round(pos)) < 1e-9:
        raise NonUniqueTargetError(f"alpha*n = {pos} is integral; quantile not unique")
    idx = int(math.ceil(pos))
    if not 1 <= idx <= n:
        raise ValueError("alpha out of range for this sample")
    return float(data[idx - 1])


def exact_median(data) -> float:
    return exact_quantile(data, 0.5)


def geometric_median(points, tol: float = 1e-10, max_iter: int = 100000) -> np.ndarray:
    """Iteratively reweighted averaging with the standard safeguard when the
    iterate lands on a data point."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    y = pts.mean(axis=0)
    for _ in range(max_iter):
        diff = pts - y
        dist = np.sqrt((diff * diff).sum(axis=1))
        on_point = dist < 1e-14
        if on_point.any():
            away = ~on_point
            w = 1.0 / dist[away]
            t_point = (pts[away] * w[:, None]).sum(axis=0) / w.sum()
            r_vec = (diff[away] * w[:, None]).sum(axis=0)
            r_norm = float(np.linalg.norm(r_vec))
            eta = float(on_point.sum())
            if r_norm <= eta:
                return y
            step = min(1.0, eta / r_norm)
            y_new = (1.0 - step) * t_point + step * y
        else:
            w = 1.0 / dist
            y_new = (pts * w[:, None]).sum(axis=0) / w.sum()
        if np.linalg.norm(y_new - y) < tol:
            return y_new
        y = y_new
    return y


def exact_depth_quantile(points, alpha: float) -> float:
    return exact_quantile(exact_l2_depths(points), alpha)


def exact_depth_trimmed_mean(points, alpha: float) -> np.ndarray:
    """Mean of the points whose exact depth clears the exact depth quantile."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    depths = exact_l2_depths(pts)
    threshold = exact_quantile(depths, alpha)
    return pts[depths >= threshold].mean(axis=0)


def exact_target(objective: dict, data) -> float | np.ndarray:
    """Ground-truth value for an objective spec, computed by direct oracles."""
    kind = objective.get("kind", "quantile")
    if kind == "quantile":
        return exact_quantile(data, float(objective.get("alpha", 0.5)))
    if kind == "geomedian":
        return geometric_median(data)
    if kind == "trimmed_mean":
        return exact_trimmed_mean(data, float(objective["alpha"]))
    raise ValueError(f"unknown objective kind: {kind!r}")


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    topology: dict = field(default_factory=lambda: {"kind": "geometric", "n": 101, "target_edges": 507})
    objective: dict = field(default_factory=lambda: {"kind": "quantile", "alpha": 0.5})
    data: dict = field(default_factory=lambda: {"kind": "contaminated_gaussian", "contamination": 0.2})
    algorithms: tuple[str, ...] = ("lite_admm", "dapd", "async_admm", "subgradient")
    trials: int = 20
    budget: int = 200_000
    rho: dict = field(default_factory=lambda: {"kind": "uniform", "low": 0.1, "high": 1.0})
    seed: int = 20240
    eval_points: int = 60
    trim_alpha: float = 0.3

    def __post_init__(self) -> None:
        n = int(self.topology.get("n", 0))
        if n < 3:
            raise ValueError("need at least 3 nodes")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")
        if self.objective.get("kind", "quantile") == "quantile":
            alpha = float(self.objective.get("alpha", 0.5))
            if not 0.0 < alpha < 1.0:
                raise ValueError("quantile level must lie in (0, 1)")
            if abs(alpha * n - round(alpha * n)) < 1e-9:
                raise ValueError("alpha * n must not be an integer (target would not be unique)")
        eps = float(self.data.get("contamination", 0.0))
        if not 0.0 <= eps < 1.0:
            raise ValueError("contamination must lie in [0, 1)")

    @property
    def n(self) -> int:
        return int(self.topology["n"])

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["algorithms"] = list(self.algorithms)
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs = {k: v for k, v in payload.items() if k in known}
        if "algorithms" in kwargs:
            kwargs["algorithms"] = tuple(kwargs["algorithms"])
        return cls(**kwargs)

    def hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def draw_rho(cfg: ExperimentConfig, trial: int) -> float:
    spec = cfg.rho
    if spec.get("kind", "uniform") == "fixed":
        return float(spec["value"])
    rng = substream(cfg.seed, _STREAM_RHO, trial)
    return float(rng.uniform(spec.get("low", 0.1), spec.get("high", 1.0)))


def trial_assignment(cfg: ExperimentConfig, trial: int) -> np.ndarray:
    return substream(cfg.seed, _STREAM_ASSIGN, trial).permutation(cfg.n)


def trial_edge_stream(cfg: ExperimentConfig, trial: int, dist, budget: int | None = None) -> np.ndarray:
    rng = substream(cfg.seed, _STREAM_EDGES, trial)
    return sample_edge_stream(dist, budget if budget is not None else cfg.budget, rng)


def build_experiment_graph(cfg: ExperimentConfig) -> Graph:
    params = {k: v for k, v in cfg.topology.items() if k not in ("kind", "n")}
    return build_topology(cfg.topology["kind"], cfg.n, seed=substream(cfg.seed, _STREAM_TOPOLOGY), **params)


def experiment_data(cfg: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    return generate_data(cfg.data, cfg.n, substream(cfg.seed, _STREAM_DATA))


# ---------------------------------------------------------------------------
# Consensus-comparison experiments (quantile / median / geometric median)
# ---------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    config: ExperimentConfig
    graph: Graph
    truth: float | np.ndarray
    per_trial: dict[str, list[MetricSeries]]
    aggregates: list[MetricSeries]
    info: dict


def _objectives_for(cfg: ExperimentConfig, node_values: np.ndarray):
    kind = cfg.objective.get("kind", "quantile")
    if kind == "quantile":
        return pinball_family(node_values, float(cfg.objective.get("alpha", 0.5)))
    if kind == "geomedian":
        return euclidean_family(node_values)
    raise ValueError(f"unsupported objective for consensus runs: {kind!r}")


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run the full trial protocol for the configured algorithm list."""
    graph = build_experiment_graph(cfg)
    dist = edge_probabilities(graph)
    values, mask = experiment_data(cfg)
    truth = exact_target(cfg.objective, values)
    grid = checkpoint_grid(cfg.budget, cfg.eval_points)
    per_trial: dict[str, list[MetricSeries]] = {name: [] for name in cfg.algorithms}
    rhos = []
    for trial in range(cfg.trials):
        perm = trial_assignment(cfg, trial)
        node_values = values[perm]
        objectives = _objectives_for(cfg, node_values)
        rho = draw_rho(cfg, trial)
        rhos.append(rho)
        stream = trial_edge_stream(cfg, trial, dist)
        for name in cfg.algorithms:
            series = consensus.run(
                name, graph, objectives, truth,
                budget=cfg.budget, rho=rho,
                edge_stream=stream, checkpoints=grid,
            )
            series.meta.update({"trial": trial, "config": cfg.hash()})
            per_trial[name].append(series)
    aggregates = [aggregate_series(per_trial[name]) for name in cfg.algorithms]
    summary = spectral_summary(graph, dist)
    info = {
        "edges": graph.num_edges,
        "lambda2": summary.lambda2,
        "weighted_gap": summary.gap,
        "connectivity": summary.connectivity,
        "rhos": rhos,
        "clean_fraction": float(np.mean(mask)),
        "diverged": {name: [s.diverged for s in runs] for name, runs in per_trial.items()},
    }
    return ExperimentResult(cfg, graph, truth, per_trial, aggregates, info)


# ---------------------------------------------------------------------------
# Trimmed-mean experiment (weight rules + gossip averaging)
# ---------------------------------------------------------------------------

@dataclass
class TrimResult:
    config: ExperimentConfig
    reference: float
    corrupted_error: float
    aggregates: list[MetricSeries]
    weight_aggregates: list[MetricSeries]
    per_trial: dict[str, list[MetricSeries]]
    final_weight_mae: dict[str, list[float]]
    info: dict


def run_trim_experiment(cfg: ExperimentConfig) -> TrimResult:
    """Trimmed-mean estimation with quantile- and rank-based weights, plus a
    median run and the corrupted plain mean as references.

    Errors are measured against the clean-sample mean (the robust-location
    target); weight errors against the exact trimmed inclusion set.
    """
    alpha = cfg.trim_alpha
    graph = build_experiment_graph(cfg)
    dist = edge_probabilities(graph)
    values, mask = experiment_data(cfg)
    reference = float(values[mask].mean())
    corrupted_error = abs(float(values.mean()) - reference)
    grid = checkpoint_grid(cfg.budget, cfg.eval_points)
    median_alpha = 0.5 if cfg.n % 2 == 1 else 0.5 + 0.5 / cfg.n

    labels = ["TrimmedMeanQuantile", "TrimmedMeanRank", "Median"]
    per_trial: dict[str, list[MetricSeries]] = {label: [] for label in labels}
    weight_trials: dict[str, list[MetricSeries]] = {"WeightsQuantile": [], "WeightsRank": []}
    final_weight_mae: dict[str, list[float]] = {"quantile": [], "rank": []}

    for trial in range(cfg.trials):
        perm = trial_assignment(cfg, trial)
        node_values = values[perm]
        oracle_w = oracle_trim_weights(node_values, alpha)
        rho = draw_rho(cfg, trial)
        stream = trial_edge_stream(cfg, trial, dist)

        q_state = GoTrimState.init(node_values, QuantileTrimRule(node_values, alpha, graph, rho))
        r_state = GoTrimState.init(node_values, RankTrimRule(node_values, alpha))
        series: dict[str, list[float]] = {label: [] for label in labels[:2]}
        wseries: dict[str, list[float]] = {"WeightsQuantile": [], "WeightsRank": []}

        def record() -> None:
            for label, state in (("TrimmedMeanQuantile", q_state), ("TrimmedMeanRank", r_state)):
                series[label].append(float(np.abs(state.estimates() - reference).mean()))
            wseries["WeightsQuantile"].append(weight_error(q_state, oracle_w))
            wseries["WeightsRank"].append(weight_error(r_state, oracle_w))

        grid_iter = iter(grid.tolist())
        next_cp = next(grid_iter)
        if next_cp == 0:
            record()
            next_cp = next(grid_iter, None)
        for t, e in enumerate(stream.tolist(), start=1):
            gotrim_step(q_state, e, graph)
            gotrim_step(r_state, e, graph)
            if t == next_cp:
                record()
                next_cp = next(grid_iter, None)
                if next_cp is None:
                    break

        for label in labels[:2]:
            per_trial[label].append(MetricSeries(label, grid, np.array(series[label]),
                                                 np.zeros(len(grid)), {"trial": trial, "rho": rho}))
        for label in wseries:
            weight_trials[label].append(MetricSeries(label, grid, np.array(wseries[label]),
                                                     np.zeros(len(grid)), {"trial": trial}))
        final_weight_mae["quantile"].append(weight_error(q_state, oracle_w))
        final_weight_mae["rank"].append(weight_error(r_state, oracle_w))

        median_objectives = pinball_family(node_values, median_alpha)
        med = consensus.run("lite_admm", graph, median_objectives, reference,
                            budget=cfg.budget, rho=rho, edge_stream=stream, checkpoints=grid)
        med.label = "Median"
        med.meta.update({"trial": trial})
        per_trial["Median"].append(med)

    aggregates = [aggregate_series(per_trial[label]) for label in labels]
    weight_aggregates = [aggregate_series(weight_trials[label]) for label in weight_trials]
    info = {
        "alpha": alpha,
        "reference": reference,
        "corrupted_error": corrupted_error,
        "exact_trimmed_mean": exact_trimmed_mean(values, alpha),
    }
    return TrimResult(cfg, reference, corrupted_error, aggregates, weight_aggregates,
                      per_trial, final_weight_mae, info)


# ---------------------------------------------------------------------------
# Depth experiment (estimation quality + depth-trimmed mean vs geometric median)
# ---------------------------------------------------------------------------

@dataclass
class DepthResult:
    config: ExperimentConfig
    aggregates: list[MetricSeries]
    per_trial: dict[str, list[MetricSeries]]
    info: dict


def run_depth_experiment(cfg: ExperimentConfig) -> DepthResult:
    """Depth estimation, its quantile, the depth-trimmed mean, and a
    geometric-median run on the same activation stream."""
    alpha = cfg.trim_alpha
    graph = build_experiment_graph(cfg)
    dist = edge_probabilities(graph)
    points, _mask = experiment_data(cfg)
    depths = exact_l2_depths(points)
    depth_q = exact_quantile(depths, alpha)
    trimmed_ref = exact_depth_trimmed_mean(points, alpha)
    geomed_ref = geometric_median(points)
    grid = checkpoint_grid(cfg.budget, cfg.eval_points)

    labels = ["DepthMaxError", "DepthQuantile", "DepthTrimmedMean", "GeometricMedian"]
    per_trial: dict[str, list[MetricSeries]] = {label: [] for label in labels}
    for trial in range(cfg.trials):
        perm = trial_assignment(cfg, trial)
        node_points = points[perm]
        node_depths = depths[perm]
        rho = draw_rho(cfg, trial)
        stream = trial_edge_stream(cfg, trial, dist)

        joint = DepthQuantileState.init(node_points, alpha)
        trim = GoTrimState.init(node_points, DepthTrimRule(joint, graph, rho))
        series: dict[str, list[float]] = {label: [] for label in labels[:3]}

        def record() -> None:
            est_depths = joint.depth.depths()
            series["DepthMaxError"].append(float(np.abs(est_depths - node_depths).max()))
            series["DepthQuantile"].append(float(np.abs(joint.x - depth_q).mean()))
            diff = trim.estimates() - trimmed_ref[None, :]
            series["DepthTrimmedMean"].append(float(np.sqrt((diff * diff).sum(axis=1)).mean()))

        grid_iter = iter(grid.tolist())
        next_cp = next(grid_iter)
        if next_cp == 0:
            record()
            next_cp = next(grid_iter, None)
        for t, e in enumerate(stream.tolist(), start=1):
            gotrim_step(trim, e, graph)
            if t == next_cp:
                record()
                next_cp = next(grid_iter, None)
                if next_cp is None:
                    break

        for label in labels[:3]:
            per_trial[label].append(MetricSeries(label, grid, np.array(series[label]),
                                                 np.zeros(len(grid)), {"trial": trial, "rho": rho}))
        geo = consensus.run("lite_admm", graph, euclidean_family(node_points), geomed_ref,
                            budget=cfg.budget, rho=rho, edge_stream=stream, checkpoints=grid)
        geo.label = "GeometricMedian"
        geo.meta.update({"trial": trial})
        per_trial["GeometricMedian"].append(geo)

    aggregates = [aggregate_series(per_trial[label]) for label in labels]
    info = {
        "alpha": alpha,
        "depth_quantile": depth_q,
        "depth_trimmed_mean": trimmed_ref.tolist(),
        "geometric_median": geomed_ref.tolist(),
    }
    return DepthResult(cfg, aggregates, per_trial, info)


# ---------------------------------------------------------------------------
# Synchronous-vs-asynchronous comparison (per full graph use)
# ---------------------------------------------------------------------------

@dataclass
class SyncCompareResult:
    config: ExperimentConfig
    graph_uses: np.ndarray
    async_aggregate: MetricSeries
    sync_aggregate: MetricSeries
    info: dict


def run_sync_compare(cfg: ExperimentConfig) -> SyncCompareResult:
    """Asynchronous runs against full synchronous rounds, aligned so that one
    round counts as |E| activations."""
    graph = build_experiment_graph(cfg)
    dist = edge_probabilities(graph)
    values, _mask = experiment_data(cfg)
    alpha = float(cfg.objective.get("alpha", 0.5))
    truth = exact_quantile(values, alpha)
    m = graph.num_edges
    rounds = max(1, cfg.budget // m)
    round_grid = checkpoint_grid(rounds, cfg.eval_points)
    activation_grid = round_grid * m

    async_runs, sync_runs = [], []
    for trial in range(cfg.trials):
        perm = trial_assignment(cfg, trial)
        node_values = values[perm]
        objectives = pinball_family(node_values, alpha)
        rho = draw_rho(cfg, trial)
        stream = trial_edge_stream(cfg, trial, dist, budget=rounds * m)
        a = consensus.run("lite_admm", graph, objectives, truth, budget=rounds * m,
                          rho=rho, edge_stream=stream, checkpoints=activation_grid)
        async_runs.append(a)
        s = consensus.run_sync(graph, objectives, truth, rounds=rounds, rho=rho,
                               checkpoints=round_grid)
        sync_runs.append(s)
    async_agg = aggregate_series(async_runs, label="LiteADMM")
    sync_agg = aggregate_series(sync_runs, label="SyncADMM")
    info = {"edges": m, "rounds": rounds}
    return SyncCompareResult(cfg, round_grid, async_agg, sync_agg, info)
