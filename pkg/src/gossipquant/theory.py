"""Executable checks of the convergence and concentration theory.

Covers: saddle-point duals for the consensus problem (needed to evaluate the
Lyapunov function), per-round Lyapunov/residual diagnostics of the
synchronous variant, the interchange-process spectral identity, and
Hoeffding/Bernstein bound evaluators with Monte-Carlo comparisons.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .consensus import SyncAdmmState, sync_step
from .graph import Graph, EdgeDistribution, edge_probabilities, spectral_summary
from .metrics import write_rows_csv
from .objectives import PinballObjective
from .ranktrim import TrimInterval, true_ranks

MAX_CHAIN_NODES = 7


class SaddleError(RuntimeError):
    """No admissible dual certificate; the supplied optimum is not optimal."""


@dataclass(frozen=True)
class SaddlePoint:
    """Consensus optimum with antisymmetric per-(edge, endpoint) duals.

    Node-wise the dual columns sum to a subgradient of the local objective at
    the optimum, which is exactly the stationarity part of the saddle
    conditions.
    """

    x_star: float
    y: np.ndarray  # (m, 2)
    node_slopes: np.ndarray  # (n,)


def solve_saddle_dual(graph: Graph, objectives, x_star: float) -> SaddlePoint:
    """Construct saddle duals by routing slope mass along a spanning tree.

    Non-anchor nodes contribute their exact pinball slope at the optimum; the
    node whose anchor equals the optimum absorbs the balancing value, which
    must land inside its subdifferential interval [-beta, 1] (otherwise the
    supplied point is not a minimizer).  Off-tree edges carry zero dual;
    uniqueness is not needed, any feasible certificate will do.
    """
    n = graph.n
    slopes = np.empty(n)
    anchor_nodes = []
    for k, obj in enumerate(objectives):
        if not isinstance(obj, PinballObjective):
            raise TypeError("saddle duals are defined for scalar pinball problems")
        if x_star < obj.a:
            slopes[k] = -obj.beta
        elif x_star > obj.a:
            slopes[k] = 1.0
        else:
            anchor_nodes.append(k)
    if len(anchor_nodes) != 1:
        raise SaddleError(f"expected exactly one anchor at the optimum, found {len(anchor_nodes)}")
    anchor = anchor_nodes[0]
    others = [k for k in range(n) if k != anchor]
    balance = -float(slopes[others].sum())
    beta = objectives[anchor].beta
    if not (-beta - 1e-9 <= balance <= 1.0 + 1e-9):
        raise SaddleError(f"balancing slope {balance} outside [-{beta}, 1]; optimum looks wrong")
    slopes[anchor] = balance

    # BFS spanning tree rooted at 0, duals accumulated leaf-to-root
    parent = [-1] * n
    parent_edge = [-1] * n
    edge_index = {(i, j): e for e, (i, j) in enumerate(graph.edges)}
    order = [0]
    seen = [False] * n
    seen[0] = True
    for u in order:
        for v in graph.neighbors[u]:
            if not seen[v]:
                seen[v] = True
                parent[v] = u
                key = (min(u, v), max(u, v))
                parent_edge[v] = edge_index[key]
                order.append(v)

    y = np.zeros((graph.num_edges, 2))
    acc = slopes.copy()  # remaining dual mass each node must place on its parent edge
    for v in reversed(order[1:]):
        e = parent_edge[v]
        i, j = graph.edges[e]
        side = 0 if i == v else 1
        y[e, side] = acc[v]
        y[e, 1 - side] = -acc[v]
        acc[parent[v]] += acc[v]
    if abs(acc[0]) > 1e-9:
        raise SaddleError(f"tree routing left residual {acc[0]} at the root")
    return SaddlePoint(x_star=float(x_star), y=y, node_slopes=slopes)


def lyapunov(state: SyncAdmmState, saddle: SaddlePoint, rho: float, graph: Graph) -> float:
    """V = || (y - y*) - rho M (x - x*) ||^2 over the stacked edge-endpoint copies."""
    if state.y is None:
        raise ValueError("run the synchronous variant with track_duals=True")
    ei = graph.edge_array[:, 0]
    ej = graph.edge_array[:, 1]
    dx = state.x - saddle.x_star
    q0 = (state.y[:, 0] - saddle.y[:, 0]) - rho * dx[ei]
    q1 = (state.y[:, 1] - saddle.y[:, 1]) - rho * dx[ej]
    return float((q0 * q0).sum() + (q1 * q1).sum())


def residual_norm(x: np.ndarray, graph: Graph) -> float:
    """Norm of the stacked consensus residual using current pair averages."""
    ei = graph.edge_array[:, 0]
    ej = graph.edge_array[:, 1]
    z = 0.5 * (x[ei] + x[ej])
    r0 = z - x[ei]
    r1 = z - x[ej]
    return math.sqrt(float((r0 * r0).sum() + (r1 * r1).sum()))


def objective_gap(x: np.ndarray, objectives, x_star: float) -> float:
    """|f(x) - f(x*)| with f the separable sum of local objectives."""
    fx = sum(obj.value(xi) for obj, xi in zip(objectives, x))
    fstar = sum(obj.value(x_star) for obj in objectives)
    return abs(float(fx) - float(fstar))


def aggregate_dual_pairing(x: np.ndarray, mu: np.ndarray, graph: Graph) -> float:
    """|sum_k <mu_k, mean of incident pair averages>|, a logged diagnostic.

    Zero whenever the aggregated duals are zero; observed to shrink along
    runs on degree-regular graphs.  No convergence guarantee is asserted.
    """
    ei = graph.edge_array[:, 0]
    ej = graph.edge_array[:, 1]
    z = 0.5 * (x[ei] + x[ej])
    zsum = np.zeros_like(x)
    np.add.at(zsum, ei, z)
    np.add.at(zsum, ej, z)
    deg = graph.degrees if x.ndim == 1 else graph.degrees[:, None]
    zhat = zsum / deg
    return abs(float((mu * zhat).sum()))


@dataclass
class SyncDiagnostics:
    """Per-round trace of the instrumented synchronous variant."""

    rho: float
    lyapunov: np.ndarray        # V^t, length rounds+1
    residual_sq: np.ndarray     # ||r^{t+1}||^2, length rounds
    gap: np.ndarray             # |f(x^t) - f(x*)|, length rounds+1
    decrement_slack: np.ndarray  # V^{t+1} - V^t + rho^2 ||r^{t+1}||^2, length rounds
    rounds_run: int

    @property
    def max_decrement_violation(self) -> float:
        return float(self.decrement_slack.max(initial=-math.inf))

    @property
    def cumulative_residual_bound_ok(self) -> bool:
        total = self.rho * self.rho * float(self.residual_sq.sum())
        return total <= self.lyapunov[0] + 1e-9 * (1.0 + self.lyapunov[0])


def run_sync_diagnostics(
    graph: Graph,
    objectives,
    rho: float,
    rounds: int,
    x_star: float,
    stop_residual: float | None = None,
    stop_gap: float | None = None,
) -> SyncDiagnostics:
    """Drive the synchronous variant with tracked duals, recording V^t, the
    squared residual, and the objective gap each round.

    ``decrement_slack`` stores V^{t+1} - V^t + rho^2 ||r^{t+1}||^2, which the
    theory says is nonpositive.  Optional stopping thresholds end the run
    once both residual norm and relative gap fall below them.
    """
    saddle = solve_saddle_dual(graph, objectives, x_star)
    state = SyncAdmmState.init(graph, objectives, rho, track_duals=True)
    v_trace = [lyapunov(state, saddle, rho, graph)]
    gap_trace = [objective_gap(state.x, objectives, x_star)]
    res_sq: list[float] = []
    slack: list[float] = []
    fstar = sum(obj.value(x_star) for obj in objectives)
    t = 0
    for t in range(1, rounds + 1):
        sync_step(state, graph, objectives, rho)
        v_new = lyapunov(state, saddle, rho, graph)
        r_sq = state.last_residual_sq
        res_sq.append(r_sq)
        slack.append(v_new - v_trace[-1] + rho * rho * r_sq)
        v_trace.append(v_new)
        gap_trace.append(objective_gap(state.x, objectives, x_star))
        if stop_residual is not None and stop_gap is not None:
            if math.sqrt(r_sq) < stop_residual and gap_trace[-1] < stop_gap * (1.0 + abs(fstar)):
                break
    # note: residual_sq here is the staged one (fresh pair averages vs fresh x)
    return SyncDiagnostics(
        rho=rho,
        lyapunov=np.array(v_trace),
        residual_sq=np.array(res_sq),
        gap=np.array(gap_trace),
        decrement_slack=np.array(slack),
        rounds_run=t,
    )


def write_diagnostics_csv(path, diag: SyncDiagnostics, pairing: np.ndarray | None = None) -> None:
    """Emit (round, V, ||r||^2, gap, pairing) rows; pairing may be absent."""
    rows = []
    for t in range(len(diag.lyapunov)):
        r_sq = diag.residual_sq[t - 1] if t >= 1 else math.nan
        a_val = pairing[t] if pairing is not None and t < len(pairing) else math.nan
        rows.append((t, diag.lyapunov[t], r_sq, diag.gap[t], a_val))
    write_rows_csv(path, ["round", "lyapunov", "residual_sq", "objective_gap", "dual_pairing"], rows)


# ---------------------------------------------------------------------------
# Interchange process on permutations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InterchangeChain:
    """Markov chain on all n! data placements; each activated edge swaps its
    endpoints' observations.  The matrix is symmetric and doubly stochastic."""

    n: int
    matrix: np.ndarray


def build_interchange_chain(graph: Graph, dist: EdgeDistribution | None = None) -> InterchangeChain:
    if graph.n > MAX_CHAIN_NODES:
        raise ValueError(f"state space {graph.n}! is too large; need n <= {MAX_CHAIN_NODES}")
    if dist is None:
        dist = edge_probabilities(graph)
    perms = list(itertools.permutations(range(graph.n)))
    index = {p: s for s, p in enumerate(perms)}
    size = len(perms)
    matrix = np.zeros((size, size))
    for s, sigma in enumerate(perms):
        for p, (i, j) in zip(dist.probs, graph.edges):
            swapped = list(sigma)
            swapped[i], swapped[j] = swapped[j], swapped[i]
            matrix[s, index[tuple(swapped)]] += p
    return InterchangeChain(n=graph.n, matrix=matrix)


def chain_spectral_gap(chain: InterchangeChain) -> float:
    """1 minus the second-largest (signed) eigenvalue of the transition matrix.

    Every transition is a transposition, so placement parity alternates and
    -1 is always an eigenvalue; aperiodicity is deliberately not asserted and
    the gap is read off the signed spectrum.
    """
    evals = np.linalg.eigvalsh(chain.matrix)
    return float(1.0 - evals[-2])


def verify_gap_identity(
    graph: Graph, dist: EdgeDistribution | None = None, tol: float = 1e-10
) -> tuple[float, float, bool]:
    """Spectral gap of the interchange chain vs the weighted-Laplacian gap."""
    if dist is None:
        dist = edge_probabilities(graph)
    chain_gap = chain_spectral_gap(build_interchange_chain(graph, dist))
    c = spectral_summary(graph, dist).gap
    return chain_gap, c, bool(abs(chain_gap - c) <= tol)


# ---------------------------------------------------------------------------
# Concentration bounds and their Monte-Carlo counterparts
# ---------------------------------------------------------------------------

def hoeffding_bound(c: float, t: float, gamma: float, n: int) -> float:
    """Two-sided exponential bound on P(|R_k(t) - r_k| >= gamma) under the
    stationary interchange chain with spectral gap c."""
    if not 0.0 < c:
        raise ValueError("spectral gap must be positive")
    if t < 1:
        raise ValueError("t must be >= 1")
    return 2.0 * math.exp(-(2.0 / (2.0 - c)) * c * t * gamma * gamma / (n * n))


def bernstein_bound(c: float, t: float, u: float, v_f: float, n: int) -> float:
    """Variance-adaptive tail bound with v_f = r'_k (1 - r'_k)."""
    if not 0.0 < c:
        raise ValueError("spectral gap must be positive")
    if t < 1:
        raise ValueError("t must be >= 1")
    denom = 4.0 * v_f + 10.0 * u / n
    return 2.0 * math.exp(-c * t * u * u / (n * n * denom))


def empirical_deviation(
    graph: Graph,
    data: np.ndarray,
    alpha: float,
    ts: list[int],
    trials: int,
    seed: int = 0,
    dist: EdgeDistribution | None = None,
) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Monte-Carlo frequencies of |R_k(t) - r_k| >= gamma_k, stationary start.

    The auxiliary observations start as a uniformly random placement; each
    round every node folds its comparison indicator into a running average and
    one edge (drawn from ``dist``) swaps.  Returns, per requested t, the
    per-node deviation frequency and its 95% binomial confidence half-width.
    """
    if trials <= 0:
        raise ValueError("need a positive number of trials")
    ts = sorted(set(int(t) for t in ts))
    if ts[0] < 1:
        raise ValueError("deviation times must be >= 1")
    if dist is None:
        dist = edge_probabilities(graph)
    data = np.asarray(data, dtype=float)
    n = graph.n
    ranks = true_ranks(data)
    interval = TrimInterval.for_sample(n, alpha)
    gamma = np.minimum(np.abs(ranks - interval.b1), np.abs(ranks - interval.b2))

    rng = np.random.default_rng(seed)
    perms = rng.permuted(np.tile(np.arange(n), (trials, 1)), axis=1)
    edge_draws = rng.choice(graph.num_edges, size=(ts[-1], trials), p=dist.probs)
    rows = np.arange(trials)
    ei = graph.edge_array[:, 0]
    ej = graph.edge_array[:, 1]

    acc = np.zeros((trials, n))
    out: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for s in range(1, ts[-1] + 1):
        acc += data[None, :] > data[perms]
        if s in ts:
            rank_est = n * (acc / s) + 1.0
            deviated = np.abs(rank_est - ranks[None, :]) >= gamma[None, :]
            freq = deviated.mean(axis=0)
            half = 1.96 * np.sqrt(freq * (1.0 - freq) / trials)
            out[s] = (freq, half)
        draw = edge_draws[s - 1]
        ii = ei[draw]
        jj = ej[draw]
        tmp = perms[rows, ii].copy()
        perms[rows, ii] = perms[rows, jj]
        perms[rows, jj] = tmp
    return out
