"""Consensus-optimization algorithms over a gossip network.

All asynchronous algorithms share the same driving loop: one edge is
activated per time step and only its two endpoints touch their state.  The
synchronous variant updates every node once per round; one round is
comparable to |E| asynchronous activations.

States hold per-node estimates shaped (n,) for scalar problems and (n, d)
for vector problems; the same update skeleton covers both since averaging
and the proximal maps are dimension-agnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import Graph, EdgeDistribution, edge_probabilities, sample_edge_stream
from .metrics import MetricSeries, checkpoint_grid
from .objectives import PinballObjective

DIVERGENCE_LIMIT = 1e12


class DualAggregateError(RuntimeError):
    """The tracked per-edge duals no longer match their node aggregate."""


def anchors_array(objectives) -> np.ndarray:
    """Stack the per-node anchors: (n,) for pinball, (n, d) for vector objectives."""
    first = objectives[0]
    if isinstance(first, PinballObjective):
        return np.array([obj.a for obj in objectives], dtype=float)
    return np.vstack([obj.a for obj in objectives])


def node_error(x: np.ndarray, truth) -> tuple[float, float]:
    """Mean and std across nodes of |x_k - truth| (Euclidean norm for vectors)."""
    if x.ndim == 1:
        err = np.abs(x - float(truth))
    else:
        diff = x - np.asarray(truth, dtype=float)[None, :]
        err = np.sqrt((diff * diff).sum(axis=1))
    return float(err.mean()), float(err.std())


# ---------------------------------------------------------------------------
# Lite gossip ADMM: two variables per node (estimate + aggregated dual)
# ---------------------------------------------------------------------------

@dataclass
class LiteAdmmState:
    x: np.ndarray
    mu: np.ndarray

    @classmethod
    def init(cls, graph: Graph, objectives, rho: float) -> "LiteAdmmState":
        x = anchors_array(objectives)
        return cls(x=x.copy(), mu=np.zeros_like(x))


def lite_admm_step(state: LiteAdmmState, edge: int, graph: Graph, objectives, rho: float) -> LiteAdmmState:
    """Pair average, then dual and proximal updates at the two endpoints only."""
    i, j = graph.edges[edge]
    x, mu = state.x, state.mu
    z = 0.5 * (x[i] + x[j])
    for k in (i, j):
        dk = graph.degrees[k]
        mu[k] = mu[k] + rho * (z - x[k]) / dk
        x[k] = objectives[k].prox(z + mu[k] / rho, 1.0 / (rho * dk))
    return state


# ---------------------------------------------------------------------------
# Synchronous variant (all nodes per round), optionally tracking edge duals
# ---------------------------------------------------------------------------

@dataclass
class SyncAdmmState:
    x: np.ndarray
    mu: np.ndarray
    y: np.ndarray | None = None  # (m, 2) or (m, 2, d): per-(edge, endpoint) duals
    last_residual_sq: float = math.nan

    @classmethod
    def init(cls, graph: Graph, objectives, rho: float, track_duals: bool = False) -> "SyncAdmmState":
        x = anchors_array(objectives)
        y = None
        if track_duals:
            shape = (graph.num_edges, 2) if x.ndim == 1 else (graph.num_edges, 2, x.shape[1])
            y = np.zeros(shape)
        return cls(x=x.copy(), mu=np.zeros_like(x), y=y)


def sync_step(state: SyncAdmmState, graph: Graph, objectives, rho: float) -> SyncAdmmState:
    """One full round: neighbor average, dual ascent, proximal update at all nodes.

    When per-edge duals are tracked they are advanced alongside and the
    aggregate identity mu_k = mean_e y_{e,k} is asserted every round, as is
    per-edge antisymmetry.  The post-round primal residual (pair averages
    minus fresh estimates, stacked per edge endpoint) is stored on the state.
    """
    x_old = state.x.copy()
    deg = graph.degrees
    ei = graph.edge_array[:, 0]
    ej = graph.edge_array[:, 1]
    deg_cols = deg if x_old.ndim == 1 else deg[:, None]

    nbr = np.zeros_like(x_old)
    np.add.at(nbr, ei, x_old[ej])
    np.add.at(nbr, ej, x_old[ei])
    zhat = 0.5 * (nbr / deg_cols + x_old)
    state.mu += rho * (zhat - x_old)
    x, mu = state.x, state.mu
    for k in range(graph.n):
        x[k] = objectives[k].prox(zhat[k] + mu[k] / rho, 1.0 / (rho * deg[k]))

    z_e = 0.5 * (x_old[ei] + x_old[ej])
    if state.y is not None:
        y = state.y
        y[:, 0] += rho * (z_e - x_old[ei])
        y[:, 1] += rho * (z_e - x_old[ej])
        scale = 1.0 + float(np.max(np.abs(y)))
        anti = np.max(np.abs(y[:, 0] + y[:, 1]))
        if anti > 1e-9 * scale:
            raise DualAggregateError(f"edge dual antisymmetry violated: {anti}")
        agg = np.zeros_like(x)
        np.add.at(agg, ei, y[:, 0])
        np.add.at(agg, ej, y[:, 1])
        agg /= deg_cols
        drift = np.max(np.abs(agg - mu))
        if drift > 1e-9 * (1.0 + float(np.max(np.abs(mu)))):
            raise DualAggregateError(f"dual aggregate identity violated: {drift}")

    r0 = z_e - x[ei]
    r1 = z_e - x[ej]
    state.last_residual_sq = float((r0 * r0).sum() + (r1 * r1).sum())
    return state


# ---------------------------------------------------------------------------
# Asynchronous ADMM with per-neighbor duals and stored neighbor averages
# ---------------------------------------------------------------------------

@dataclass
class AsyncAdmmState:
    x: np.ndarray
    lam: np.ndarray   # (m, 2): lam[e, 0] owned by i toward j, lam[e, 1] by j toward i
    xbar: np.ndarray  # (m, 2): stored pair averages, same ownership layout
    tsum: np.ndarray  # per node: sum over incident slots of (xbar - lam)

    @classmethod
    def init(cls, graph: Graph, objectives, rho: float) -> "AsyncAdmmState":
        x = anchors_array(objectives)
        shape = (graph.num_edges, 2) if x.ndim == 1 else (graph.num_edges, 2, x.shape[1])
        lam = np.zeros(shape)
        xbar = np.zeros(shape)
        ei = graph.edge_array[:, 0]
        ej = graph.edge_array[:, 1]
        xbar[:, 0] = x[ei]
        xbar[:, 1] = x[ej]
        deg_cols = graph.degrees if x.ndim == 1 else graph.degrees[:, None]
        tsum = deg_cols * x
        return cls(x=x.copy(), lam=lam, xbar=xbar, tsum=np.asarray(tsum, dtype=float))


def async_admm_step(state: AsyncAdmmState, edge: int, graph: Graph, objectives, rho: float) -> AsyncAdmmState:
    i, j = graph.edges[edge]
    x, lam, xbar, tsum = state.x, state.lam, state.xbar, state.tsum
    for k in (i, j):
        dk = graph.degrees[k]
        x[k] = objectives[k].prox(tsum[k] / dk, 1.0 / (rho * dk))
    pair_avg = 0.5 * (x[i] + x[j])
    for k, side in ((i, 0), (j, 1)):
        dlam = rho * (x[k] - pair_avg)
        lam[edge, side] = lam[edge, side] + dlam
        tsum[k] += (pair_avg - xbar[edge, side]) - dlam
        xbar[edge, side] = pair_avg
    return state


# ---------------------------------------------------------------------------
# Asynchronous primal-dual with pairwise-antisymmetric duals
# ---------------------------------------------------------------------------

@dataclass
class DapdState:
    x: np.ndarray
    lam: np.ndarray
    xbar: np.ndarray
    usum: np.ndarray  # per node: sum over incident slots of (xbar - lam / rho)

    @classmethod
    def init(cls, graph: Graph, objectives, rho: float) -> "DapdState":
        base = AsyncAdmmState.init(graph, objectives, rho)
        return cls(x=base.x, lam=base.lam, xbar=base.xbar, usum=base.tsum)


def dapd_step(state: DapdState, edge: int, graph: Graph, objectives, rho: float) -> DapdState:
    """Dual update on the activated edge (antisymmetric by construction),
    proximal primal updates at both endpoints, then neighbor-value refresh."""
    i, j = graph.edges[edge]
    x, lam, xbar, usum = state.x, state.lam, state.xbar, state.usum
    old_ij = lam[edge, 0].copy() if x.ndim > 1 else lam[edge, 0]
    old_ji = lam[edge, 1].copy() if x.ndim > 1 else lam[edge, 1]
    new_ij = 0.5 * (old_ij - old_ji) + 0.5 * rho * (x[i] - x[j])
    lam[edge, 0] = new_ij
    lam[edge, 1] = -new_ij
    usum[i] += (old_ij - new_ij) / rho
    usum[j] += (old_ji + new_ij) / rho
    for k in (i, j):
        dk = graph.degrees[k]
        x[k] = objectives[k].prox(0.5 * x[k] + 0.5 * usum[k] / dk, 1.0 / (rho * dk))
    usum[i] += x[j] - xbar[edge, 0]
    xbar[edge, 0] = x[j]
    usum[j] += x[i] - xbar[edge, 1]
    xbar[edge, 1] = x[i]
    return state


# ---------------------------------------------------------------------------
# Distributed subgradient descent with diminishing step and pair averaging
# ---------------------------------------------------------------------------

@dataclass
class SubgradState:
    x: np.ndarray
    t: int = 0
    anchors: np.ndarray | None = None
    beta: float | None = None  # set for pinball problems; None for vector ones

    @classmethod
    def init(cls, graph: Graph, objectives, rho: float) -> "SubgradState":
        x = anchors_array(objectives)
        beta = None
        if isinstance(objectives[0], PinballObjective):
            beta = objectives[0].beta
        return cls(x=x.copy(), t=0, anchors=x.copy(), beta=beta)


def _subgradients(state: SubgradState) -> np.ndarray:
    x, a = state.x, state.anchors
    if state.beta is not None:
        g = np.where(x < a, -state.beta, np.where(x > a, 1.0, 0.5 * (1.0 - state.beta)))
        return g
    diff = x - a
    norms = np.sqrt((diff * diff).sum(axis=1, keepdims=True))
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(norms > 0, diff / norms, 0.0)
    return g


def subgradient_step(state: SubgradState, edge: int, graph: Graph, objectives, rho: float) -> SubgradState:
    """Every node takes a 1/sqrt(t+1)-damped subgradient step; the sampled
    edge pair then averages.  Not fully asynchronous by construction."""
    lr = rho / math.sqrt(state.t + 1)
    state.x -= lr * _subgradients(state)
    i, j = graph.edges[edge]
    x = state.x
    avg = 0.5 * (x[i] + x[j])
    x[i] = avg
    x[j] = avg
    state.t += 1
    return state


# ---------------------------------------------------------------------------
# Edge-based ADMM with per-edge splitting variables (known not to converge
# on median problems; kept as a reference baseline)
# ---------------------------------------------------------------------------

@dataclass
class EdgeAdmmState:
    x: np.ndarray
    z: np.ndarray  # (m, 2): z[e, 0] pairs with +x_i, z[e, 1] with -x_j
    p: np.ndarray  # (m, 2): per-(edge, endpoint) duals

    @classmethod
    def init(cls, graph: Graph, objectives, rho: float) -> "EdgeAdmmState":
        x = anchors_array(objectives)
        if x.ndim != 1:
            raise ValueError("edge-based ADMM is implemented for scalar problems only")
        m = graph.num_edges
        z = np.zeros((m, 2))
        z[:, 0] = x[graph.edge_array[:, 0]]
        z[:, 1] = -x[graph.edge_array[:, 1]]
        return cls(x=x.copy(), z=z, p=np.zeros((m, 2)))


def edge_admm_step(state: EdgeAdmmState, edge: int, graph: Graph, objectives, beta: float) -> EdgeAdmmState:
    """Primal proxes on the signed edge copies, coupling variable, then the
    edge's splitting and dual variables.  Incidence signs are +1 for the
    lower-numbered endpoint and -1 for the other."""
    i, j = graph.edges[edge]
    x, z, p = state.x, state.z, state.p
    gamma = 1.0 / beta
    x[i] = objectives[i].prox(z[edge, 0] + p[edge, 0] * gamma, gamma)
    x[j] = objectives[j].prox(-(z[edge, 1] + p[edge, 1] * gamma), gamma)
    v = 0.5 * (-p[edge, 0] - p[edge, 1]) + 0.5 * beta * (x[i] - x[j])
    z[edge, 0] = (-p[edge, 0] - v) * gamma + x[i]
    z[edge, 1] = (-p[edge, 1] - v) * gamma - x[j]
    p[edge, 0] = -v
    p[edge, 1] = -v
    return state


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Algorithm:
    name: str
    label: str
    init: type
    step: callable


ALGORITHMS: dict[str, Algorithm] = {
    "lite_admm": Algorithm("lite_admm", "LiteADMM", LiteAdmmState, lite_admm_step),
    "async_admm": Algorithm("async_admm", "AsyncADMM", AsyncAdmmState, async_admm_step),
    "dapd": Algorithm("dapd", "DAPD", DapdState, dapd_step),
    "subgradient": Algorithm("subgradient", "Subgradient", SubgradState, subgradient_step),
    "edge_admm": Algorithm("edge_admm", "EdgeADMM", EdgeAdmmState, edge_admm_step),
}


def run(
    algorithm: str,
    graph: Graph,
    objectives,
    truth,
    budget: int,
    rho: float,
    seed: int | None = None,
    edge_stream: np.ndarray | None = None,
    dist: EdgeDistribution | None = None,
    checkpoints: np.ndarray | None = None,
    eval_every: int | None = None,
    divergence_limit: float = DIVERGENCE_LIMIT,
    stop_on_divergence: bool = True,
) -> MetricSeries:
    """Run one asynchronous trial and record node-error statistics.

    Deterministic given the seed (or an explicit pre-drawn edge stream, which
    lets several algorithms share the same activation sequence).  Divergence
    (non-finite entries or |x| beyond ``divergence_limit``) is flagged; by
    default the run then stops and the remaining checkpoints repeat the value
    observed at detection, with ``stop_on_divergence=False`` it keeps going.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    algo = ALGORITHMS[algorithm]
    if edge_stream is None:
        if dist is None:
            dist = edge_probabilities(graph)
        rng = np.random.default_rng(seed)
        edge_stream = sample_edge_stream(dist, budget, rng)
    if len(edge_stream) < budget:
        raise ValueError("edge stream shorter than budget")
    grid = checkpoints if checkpoints is not None else checkpoint_grid(budget, eval_every=eval_every)

    state = algo.init.init(graph, objectives, rho)
    means: list[float] = []
    stds: list[float] = []
    diverged = False

    def record() -> float:
        m, s = node_error(state.x, truth)
        if not math.isfinite(m):
            m, s = math.inf, math.inf
        means.append(m)
        stds.append(s)
        return m

    step = algo.step
    grid_iter = iter(grid.tolist())
    next_cp = next(grid_iter)
    if next_cp == 0:
        record()
        next_cp = next(grid_iter, None)
    with np.errstate(over="ignore", invalid="ignore"):
        for t, e in enumerate(edge_stream[:budget].tolist(), start=1):
            step(state, e, graph, objectives, rho)
            if t == next_cp:
                last = record()
                xs = state.x
                finite = math.isfinite(last) and bool(np.all(np.isfinite(xs)))
                if not finite or np.max(np.abs(xs)) > divergence_limit:
                    diverged = True
                    if stop_on_divergence or not finite:
                        break
                next_cp = next(grid_iter, None)
                if next_cp is None:
                    break
    while len(means) < len(grid):
        means.append(means[-1])
        stds.append(stds[-1])
    return MetricSeries(
        label=algo.label,
        activations=grid,
        mean=np.array(means),
        std=np.array(stds),
        meta={"algorithm": algorithm, "rho": rho, "seed": seed, "diverged": diverged},
    )


def run_sync(
    graph: Graph,
    objectives,
    truth,
    rounds: int,
    rho: float,
    track_duals: bool = False,
    checkpoints: np.ndarray | None = None,
) -> MetricSeries:
    """Run the synchronous variant for a number of full rounds.

    Checkpoints are in rounds; one round costs |E| activations when compared
    against the asynchronous algorithms.
    """
    grid = checkpoints if checkpoints is not None else checkpoint_grid(rounds)
    state = SyncAdmmState.init(graph, objectives, rho, track_duals=track_duals)
    means: list[float] = []
    stds: list[float] = []
    grid_iter = iter(grid.tolist())
    next_cp = next(grid_iter)
    if next_cp == 0:
        m, s = node_error(state.x, truth)
        means.append(m)
        stds.append(s)
        next_cp = next(grid_iter, None)
    for t in range(1, rounds + 1):
        sync_step(state, graph, objectives, rho)
        if t == next_cp:
            m, s = node_error(state.x, truth)
            means.append(m)
            stds.append(s)
            next_cp = next(grid_iter, None)
            if next_cp is None:
                break
    return MetricSeries(
        label="SyncADMM",
        activations=grid,
        mean=np.array(means),
        std=np.array(stds),
        meta={"algorithm": "sync_admm", "rho": rho, "rounds": rounds},
    )


def state_to_dict(state) -> dict:
    """JSON-friendly snapshot of any algorithm state (arrays become lists)."""
    out = {"kind": type(state).__name__}
    for name, value in vars(state).items():
        if isinstance(value, np.ndarray):
            out[name] = value.tolist()
        elif value is None or isinstance(value, (int, float)):
            out[name] = value
    return out


def state_from_dict(payload: dict):
    """Rebuild a state snapshot produced by ``state_to_dict``."""
    kinds = {
        cls.__name__: cls
        for cls in (LiteAdmmState, SyncAdmmState, AsyncAdmmState, DapdState, SubgradState, EdgeAdmmState)
    }
    cls = kinds[payload["kind"]]
    kwargs = {}
    for name, value in payload.items():
        if name == "kind":
            continue
        kwargs[name] = np.asarray(value, dtype=float) if isinstance(value, list) else value
    return cls(**kwargs)
