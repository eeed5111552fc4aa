"""Decentralized robust linear regression via gradient trimming.

Nodes hold (feature, label) pairs and fit a line by local gradient steps with
pairwise averaging.  High-leverage gradients are excluded through a score
rule (large |x|*|y| means low score, and the bottom fraction is trimmed);
the inclusion sets come either from gossip rank estimates of the scores or
from a gossip quantile estimate, each padded against early estimation error.
Centralized closed-form baselines provide the comparison yardsticks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .consensus import LiteAdmmState, lite_admm_step
from .graph import Graph, edge_probabilities, sample_edge_stream
from .metrics import MetricSeries, checkpoint_grid
from .objectives import pinball_family
from .ranktrim import GoRankState, TrimInterval, _gorank_update, true_ranks

DIVERGENCE_LIMIT = 1e12


@dataclass
class RegressionProblem:
    """Per-node scalar feature and label, with contamination ground truth.

    Scores are d_k = -|x_k| * |y_k|: extreme-leverage points sit at the bottom
    of the score ordering and are the ones trimming should drop.
    """

    features: np.ndarray       # (n,)
    labels: np.ndarray         # (n,)
    clean_mask: np.ndarray     # ground truth, for oracles only
    theta_true: np.ndarray     # (2,) slope, intercept
    scores: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.scores = -np.abs(self.features) * np.abs(self.labels)
        if len(np.unique(self.scores)) != len(self.scores):
            raise ValueError("tied scores; regenerate the data")

    @property
    def n(self) -> int:
        return len(self.features)

    def design(self) -> np.ndarray:
        return np.column_stack([self.features, np.ones(self.n)])


def generate_regression_problem(
    n: int,
    rng: np.random.Generator,
    contamination: float = 0.1,
    feature_scale: float = 3.0,
    noise_scale: float = 0.5,
    outlier_scale: float = 60.0,
    retries: int = 50,
) -> RegressionProblem:
    """Line data with a contaminated label fraction far off the line.

    Features are Student-t distributed (heavy tails), so the top-leverage
    points carry individually unstable gradient curvature at the step sizes
    used; trimming them is what keeps the optimization stable.
    """
    n_bad = int(math.floor(contamination * n + 1e-9))
    for _ in range(retries):
        theta = np.array([rng.uniform(1.0, 2.0), rng.uniform(-1.0, 1.0)])
        x = feature_scale * rng.standard_t(df=3, size=n)
        y = theta[0] * x + theta[1] + noise_scale * rng.normal(size=n)
        bad = rng.choice(n, size=n_bad, replace=False)
        y[bad] = outlier_scale * rng.normal(size=n_bad)
        mask = np.ones(n, dtype=bool)
        mask[bad] = False
        try:
            return RegressionProblem(features=x, labels=y, clean_mask=mask, theta_true=theta)
        except ValueError:
            continue
    raise RuntimeError("could not generate tie-free regression scores")


# ---------------------------------------------------------------------------
# Closed-form baselines
# ---------------------------------------------------------------------------

def _least_squares(features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    design = np.column_stack([features, np.ones(len(features))])
    theta, *_ = np.linalg.lstsq(design, labels, rcond=None)
    return theta


def huber_regression(features: np.ndarray, labels: np.ndarray,
                     threshold: float = 1.345, max_iter: int = 100) -> np.ndarray:
    """Iteratively reweighted least squares with the textbook 1.345 threshold
    applied at the MAD residual scale."""
    theta = _least_squares(features, labels)
    design = np.column_stack([features, np.ones(len(features))])
    for _ in range(max_iter):
        resid = labels - design @ theta
        scale = np.median(np.abs(resid - np.median(resid))) / 0.6745
        scale = max(scale, 1e-12)
        z = np.abs(resid) / scale
        w = np.where(z <= threshold, 1.0, threshold / np.maximum(z, 1e-12))
        wd = design * w[:, None]
        theta_new = np.linalg.solve(wd.T @ design, wd.T @ labels)
        if np.max(np.abs(theta_new - theta)) < 1e-10:
            return theta_new
        theta = theta_new
    return theta


def oracle_baselines(problem: RegressionProblem) -> dict[str, np.ndarray]:
    """Closed-form fits: clean-subset, exact score-trimmed, corrupted, Huber."""
    interval = TrimInterval.for_sample(problem.n, 0.2)
    m = interval.m
    keep = true_ranks(problem.scores) > m
    return {
        "OracleRegression": _least_squares(problem.features[problem.clean_mask],
                                           problem.labels[problem.clean_mask]),
        "OracleTrimming": _least_squares(problem.features[keep], problem.labels[keep]),
        "CorruptedLeastSquares": _least_squares(problem.features, problem.labels),
        "Huber": huber_regression(problem.features, problem.labels),
    }


def oracle_inclusion(problem: RegressionProblem, alpha: float) -> np.ndarray:
    """Exact inclusion weights: scores strictly above the bottom-m block."""
    m = TrimInterval.for_sample(problem.n, alpha).m
    return (true_ranks(problem.scores) > m).astype(float)


# ---------------------------------------------------------------------------
# Trimmed gradient descent
# ---------------------------------------------------------------------------

class RankInclusionRule:
    """Include gradient k when its score rank estimate clears m plus an
    uncertainty margin kappa / sqrt(updates_k).

    The mask is maintained incrementally: each activation only the two
    endpoints' rank estimates and counters change.
    """

    def __init__(self, problem: RegressionProblem, alpha: float, kappa: float):
        self.rank_state = GoRankState.init(problem.scores)
        self.m = TrimInterval.for_sample(problem.n, alpha).m
        self.kappa = kappa
        self.n = problem.n
        self.mask = np.zeros(problem.n, dtype=bool)

    def _refresh(self, k: int) -> None:
        updates = self.rank_state.counts[k] - 1
        if updates < 1:
            self.mask[k] = False
            return
        delta = self.kappa / math.sqrt(updates)
        rank = self.n * self.rank_state.rprime[k] + 1.0
        self.mask[k] = rank > self.m + delta

    def advance(self, edge: int, i: int, j: int) -> None:
        _gorank_update(self.rank_state, i)
        _gorank_update(self.rank_state, j)
        aux = self.rank_state.aux
        aux[i], aux[j] = aux[j], aux[i]
        self._refresh(i)
        self._refresh(j)

    def included(self) -> np.ndarray:
        return self.mask


class QuantileInclusionRule:
    """Include gradient k when its score clears the gossip estimate of the
    alpha-quantile of scores; no gradients at all during a burn-in count."""

    def __init__(self, problem: RegressionProblem, alpha: float, burn_in: float,
                 graph: Graph, rho: float):
        self.scores = problem.scores
        self.objectives = pinball_family(problem.scores, alpha)
        self.state = LiteAdmmState.init(graph, self.objectives, rho)
        self.burn_in = burn_in
        self.counts = np.zeros(problem.n)
        self.graph = graph
        self.rho = rho
        self.mask = np.zeros(problem.n, dtype=bool)

    def advance(self, edge: int, i: int, j: int) -> None:
        lite_admm_step(self.state, edge, self.graph, self.objectives, self.rho)
        for k in (i, j):
            self.counts[k] += 1
            self.mask[k] = self.counts[k] > self.burn_in and self.scores[k] > self.state.x[k]

    def included(self) -> np.ndarray:
        return self.mask


class OracleInclusionRule:
    """Frozen exact weights (rule bypass)."""

    def __init__(self, problem: RegressionProblem, alpha: float):
        self.mask = oracle_inclusion(problem, alpha) > 0.5

    def advance(self, edge: int, i: int, j: int) -> None:
        pass

    def included(self) -> np.ndarray:
        return self.mask


@dataclass
class TrimmedGdResult:
    series: MetricSeries
    theta_final: np.ndarray   # (n, 2) per-node parameters at the end
    diverged: bool


def run_trimmed_gd(
    problem: RegressionProblem,
    graph: Graph,
    rule: str,
    rho: float,
    budget: int,
    p: float = 3.0,
    alpha: float = 0.2,
    mode: str = "simultaneous",
    freeze_after: int | None = None,
    seed: int | None = None,
    edge_stream: np.ndarray | None = None,
    checkpoints: np.ndarray | None = None,
    rho_rule: float = 1.0,
) -> TrimmedGdResult:
    """Gradient descent with gradient trimming over a gossip network.

    Every activation all nodes take a trimmed gradient step, the sampled pair
    averages, and the weight rule advances on the same edge.  ``rank`` uses a
    margin kappa/sqrt(c_k) with kappa = 4n/p; ``quantile`` waits out a burn-in
    of 4n/p updates per node; ``oracle`` bypasses estimation.  ``sequential``
    mode freezes the inclusion set after ``freeze_after`` activations instead
    of shrinking the margin.  Divergence (any |theta| beyond 1e12) is flagged
    and stops the run.
    """
    n = problem.n
    if edge_stream is None:
        rng = np.random.default_rng(seed)
        edge_stream = sample_edge_stream(edge_probabilities(graph), budget, rng)
    grid = checkpoints if checkpoints is not None else checkpoint_grid(budget)
    kappa = 4.0 * n / p
    if rule == "rank":
        inclusion = RankInclusionRule(problem, alpha, kappa)
    elif rule == "quantile":
        inclusion = QuantileInclusionRule(problem, alpha, burn_in=kappa, graph=graph, rho=rho_rule)
    elif rule == "oracle":
        inclusion = OracleInclusionRule(problem, alpha)
    else:
        raise ValueError(f"unknown rule: {rule!r}")
    if mode not in ("simultaneous", "sequential"):
        raise ValueError(f"unknown mode: {mode!r}")
    if mode == "sequential" and freeze_after is None:
        freeze_after = budget // 4

    theta = np.zeros((n, 2))
    design = problem.design()
    labels = problem.labels
    theta_true = problem.theta_true

    def param_error() -> float:
        diff = theta - theta_true[None, :]
        return float(np.sqrt((diff * diff).sum(axis=1)).mean())

    means: list[float] = []
    grid_iter = iter(grid.tolist())
    next_cp = next(grid_iter)
    if next_cp == 0:
        means.append(param_error())
        next_cp = next(grid_iter, None)
    diverged = False
    frozen_weights: np.ndarray | None = None
    edges = graph.edges
    with np.errstate(over="ignore", invalid="ignore"):
        for t, e in enumerate(edge_stream[:budget].tolist(), start=1):
            if frozen_weights is not None:
                included = frozen_weights
            else:
                included = inclusion.included()
            resid = (design * theta).sum(axis=1) - labels
            grad = design * resid[:, None]
            theta -= rho * (included[:, None] * grad)
            i, j = edges[e]
            avg = 0.5 * (theta[i] + theta[j])
            theta[i] = avg
            theta[j] = avg
            inclusion.advance(e, i, j)
            if mode == "sequential" and frozen_weights is None and t >= freeze_after:
                frozen_weights = inclusion.included().copy()
            peak = np.max(np.abs(theta))
            if not np.isfinite(peak) or peak > DIVERGENCE_LIMIT:
                diverged = True
                means.append(math.inf if not np.isfinite(peak) else param_error())
                break
            if t == next_cp:
                means.append(param_error())
                next_cp = next(grid_iter, None)
                if next_cp is None:
                    break
    while len(means) < len(grid):
        means.append(means[-1])
    series = MetricSeries(
        label=f"TrimmedGD-{rule}",
        activations=grid,
        mean=np.array(means),
        std=np.zeros(len(grid)),
        meta={"rule": rule, "p": p, "rho": rho, "mode": mode, "diverged": diverged},
    )
    return TrimmedGdResult(series=series, theta_final=theta.copy(), diverged=diverged)
