"""Gossip estimation of ranks, trimmed means, and data depths.

The swap-based estimators keep one auxiliary observation per node and
exchange it along activated edges, so the multiset of auxiliary values is
invariant; running averages of local comparisons then converge to ranks
(GoRank) or mean distances (GoDepth).  Adaptive trimming combines a weight
rule with delta-corrected gossip averaging of the weighted sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .consensus import LiteAdmmState, lite_admm_step
from .graph import Graph
from .objectives import pinball_family


def true_ranks(data) -> np.ndarray:
    """Exact ranks r_k = 1 + #{l : a_k > a_l}; requires pairwise-distinct data."""
    data = np.asarray(data, dtype=float)
    if len(np.unique(data)) != len(data):
        raise ValueError("ranks are undefined in the presence of ties")
    ranks = np.empty(len(data), dtype=float)
    ranks[np.argsort(data)] = np.arange(1, len(data) + 1)
    return ranks


@dataclass(frozen=True)
class TrimInterval:
    """Closed rank-inclusion interval [m + 1/2, n - m + 1/2] with m = floor(alpha n)."""

    b1: float
    b2: float

    @classmethod
    def for_sample(cls, n: int, alpha: float) -> "TrimInterval":
        if not 0.0 <= alpha < 0.5:
            raise ValueError("trimming level must lie in [0, 1/2)")
        m = int(math.floor(alpha * n + 1e-9))
        return cls(b1=m + 0.5, b2=n - m + 0.5)

    @property
    def m(self) -> int:
        return int(self.b1 - 0.5)


def rank_weight(rank: float, interval: TrimInterval) -> float:
    """Indicator of rank membership in the closed inclusion interval."""
    return 1.0 if interval.b1 <= rank <= interval.b2 else 0.0


def quantile_weight(x: float, q_lo: float, q_hi: float) -> float:
    """Indicator of x in [q_lo, q_hi]; crossed estimates simply yield 0."""
    return 1.0 if q_lo <= x <= q_hi else 0.0


def oracle_trim_weights(data, alpha: float) -> np.ndarray:
    """True inclusion weights from exact ranks (the sorted middle block)."""
    data = np.asarray(data, dtype=float)
    interval = TrimInterval.for_sample(len(data), alpha)
    ranks = true_ranks(data)
    return ((ranks >= interval.b1) & (ranks <= interval.b2)).astype(float)


def exact_trimmed_mean(data, alpha: float) -> float:
    """Average of the sorted sample with the m smallest and largest removed."""
    data = np.sort(np.asarray(data, dtype=float))
    m = TrimInterval.for_sample(len(data), alpha).m
    return float(data[m: len(data) - m].mean())


# ---------------------------------------------------------------------------
# GoRank: swap-based rank estimation
# ---------------------------------------------------------------------------

@dataclass
class GoRankState:
    data: np.ndarray     # own observations X_k, fixed
    aux: np.ndarray      # auxiliary observations Y_k, swapped along edges
    rprime: np.ndarray   # running comparison averages in [0, 1]
    counts: np.ndarray   # per-node update counters C_k, start at 1

    @classmethod
    def init(cls, data) -> "GoRankState":
        data = np.asarray(data, dtype=float)
        return cls(
            data=data.copy(),
            aux=data.copy(),
            rprime=np.zeros(len(data)),
            counts=np.ones(len(data), dtype=np.int64),
        )

    def ranks(self) -> np.ndarray:
        return len(self.data) * self.rprime + 1.0


def _gorank_update(state: GoRankState, k: int) -> None:
    c = state.counts[k]
    indicator = 1.0 if state.data[k] > state.aux[k] else 0.0
    state.rprime[k] += (indicator - state.rprime[k]) / c
    state.counts[k] = c + 1


def gorank_async_step(state: GoRankState, i: int, j: int) -> GoRankState:
    """Both endpoints fold in a comparison indicator, then swap auxiliaries."""
    _gorank_update(state, i)
    _gorank_update(state, j)
    state.aux[i], state.aux[j] = state.aux[j], state.aux[i]
    return state


def gorank_sync_round(state: GoRankState, swap_edge: tuple[int, int], round_index: int) -> GoRankState:
    """Synchronous round s: every node updates with weight 1/s, one edge swaps."""
    if round_index < 1:
        raise ValueError("rounds are 1-based")
    indicator = (state.data > state.aux).astype(float)
    state.rprime += (indicator - state.rprime) / round_index
    i, j = swap_edge
    state.aux[i], state.aux[j] = state.aux[j], state.aux[i]
    return state


# ---------------------------------------------------------------------------
# GoDepth: swap-based centrality estimation
# ---------------------------------------------------------------------------

@dataclass
class GoDepthState:
    data: np.ndarray    # (n, d) own vectors, fixed
    aux: np.ndarray     # (n, d) auxiliary vectors, swapped along edges
    zbar: np.ndarray    # running mean distance to swapped partners
    counts: np.ndarray  # start at 1; incremented before each fold-in

    @classmethod
    def init(cls, data) -> "GoDepthState":
        data = np.atleast_2d(np.asarray(data, dtype=float))
        return cls(
            data=data.copy(),
            aux=data.copy(),
            zbar=np.zeros(len(data)),
            counts=np.ones(len(data), dtype=np.int64),
        )

    def depths(self) -> np.ndarray:
        return 1.0 / (1.0 + self.zbar)


def godepth_step(state: GoDepthState, i: int, j: int) -> GoDepthState:
    """Swap the auxiliaries first, then both endpoints fold in the distance
    to their fresh partner (the counter increments before the fold-in)."""
    tmp = state.aux[i].copy()
    state.aux[i] = state.aux[j]
    state.aux[j] = tmp
    for k in (i, j):
        state.counts[k] += 1
        dist = float(np.linalg.norm(state.data[k] - state.aux[k]))
        state.zbar[k] += (dist - state.zbar[k]) / state.counts[k]
    return state


def exact_l2_depths(data) -> np.ndarray:
    """Closed-form centrality: (1 + mean distance to all points)^-1."""
    pts = np.atleast_2d(np.asarray(data, dtype=float))
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    return 1.0 / (1.0 + dist.mean(axis=1))


# ---------------------------------------------------------------------------
# Joint depth + quantile estimation (anchors refreshed with live depths)
# ---------------------------------------------------------------------------

@dataclass
class DepthQuantileState:
    """Depth estimation running jointly with a gossip-ADMM quantile of the
    depths: each activation refreshes the two endpoints' depths, then runs
    their ADMM updates with the fresh depth values as anchors."""

    depth: GoDepthState
    x: np.ndarray
    mu: np.ndarray
    alpha: float
    beta: float

    @classmethod
    def init(cls, data, alpha: float) -> "DepthQuantileState":
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        depth = GoDepthState.init(data)
        x = depth.depths()
        return cls(
            depth=depth,
            x=x.copy(),
            mu=np.zeros_like(x),
            alpha=alpha,
            beta=alpha / (1.0 - alpha),
        )


def _pinball_prox(z: float, gamma: float, a: float, beta: float) -> float:
    if z < a - gamma * beta:
        return z + gamma * beta
    if z > a + gamma:
        return z - gamma
    return a


def depth_quantile_step(state: DepthQuantileState, edge: int, graph: Graph, rho: float) -> DepthQuantileState:
    i, j = graph.edges[edge]
    godepth_step(state.depth, i, j)
    x, mu = state.x, state.mu
    z = 0.5 * (x[i] + x[j])
    zb = state.depth.zbar
    for k in (i, j):
        dk = graph.degrees[k]
        mu[k] += rho * (z - x[k]) / dk
        anchor = 1.0 / (1.0 + zb[k])
        x[k] = _pinball_prox(z + mu[k] / rho, 1.0 / (rho * dk), anchor, state.beta)
    return state


# ---------------------------------------------------------------------------
# Adaptive trimming: weight rules + delta-corrected gossip averaging
# ---------------------------------------------------------------------------

class RankTrimRule:
    """Weights from GoRank rank estimates against the inclusion interval."""

    def __init__(self, data, alpha: float):
        data = np.asarray(data, dtype=float)
        self.state = GoRankState.init(data)
        self.interval = TrimInterval.for_sample(len(data), alpha)
        self.n = len(data)

    def update(self, edge: int, i: int, j: int) -> None:
        _gorank_update(self.state, i)
        _gorank_update(self.state, j)

    def weight(self, k: int) -> float:
        rank = self.n * self.state.rprime[k] + 1.0
        return rank_weight(rank, self.interval)

    def exchange(self, i: int, j: int) -> None:
        aux = self.state.aux
        aux[i], aux[j] = aux[j], aux[i]


class QuantileTrimRule:
    """Weights from two gossip-ADMM quantile estimates sharing the edge stream."""

    def __init__(self, data, alpha: float, graph: Graph, rho: float):
        data = np.asarray(data, dtype=float)
        self.data = data
        self.graph = graph
        self.rho = rho
        self.lo_objectives = pinball_family(data, alpha)
        self.hi_objectives = pinball_family(data, 1.0 - alpha)
        self.lo = LiteAdmmState.init(graph, self.lo_objectives, rho)
        self.hi = LiteAdmmState.init(graph, self.hi_objectives, rho)

    def update(self, edge: int, i: int, j: int) -> None:
        lite_admm_step(self.lo, edge, self.graph, self.lo_objectives, self.rho)
        lite_admm_step(self.hi, edge, self.graph, self.hi_objectives, self.rho)

    def weight(self, k: int) -> float:
        return quantile_weight(self.data[k], self.lo.x[k], self.hi.x[k])

    def exchange(self, i: int, j: int) -> None:
        pass


class DepthTrimRule:
    """Weights keep a node iff its live depth clears the live depth-quantile."""

    def __init__(self, joint: DepthQuantileState, graph: Graph, rho: float):
        self.joint = joint
        self.graph = graph
        self.rho = rho

    def update(self, edge: int, i: int, j: int) -> None:
        depth_quantile_step(self.joint, edge, self.graph, self.rho)

    def weight(self, k: int) -> float:
        depth = 1.0 / (1.0 + self.joint.depth.zbar[k])
        return 1.0 if depth >= self.joint.x[k] else 0.0

    def exchange(self, i: int, j: int) -> None:
        pass


class OracleTrimRule:
    """Frozen exact weights; used to isolate the averaging skeleton in tests."""

    def __init__(self, weights):
        self.weights = np.asarray(weights, dtype=float)

    def update(self, edge: int, i: int, j: int) -> None:
        pass

    def weight(self, k: int) -> float:
        return float(self.weights[k])

    def exchange(self, i: int, j: int) -> None:
        pass


@dataclass
class GoTrimState:
    """Delta-corrected gossip averaging of weighted sums and weight mass."""

    data: np.ndarray          # scalar (n,) or vector (n, d) values being trimmed
    nsum: np.ndarray          # weighted partial sums
    msum: np.ndarray          # weight mass
    w: np.ndarray             # last applied weights
    rule: object

    @classmethod
    def init(cls, data, rule) -> "GoTrimState":
        data = np.asarray(data, dtype=float)
        return cls(
            data=data.copy(),
            nsum=np.zeros_like(data),
            msum=np.zeros(len(data)),
            w=np.zeros(len(data)),
            rule=rule,
        )

    def estimates(self) -> np.ndarray:
        # ratio consensus: both sums are pair-averaged, so N/M tends to the
        # trimmed mean; the guard only protects the all-zero start, because
        # the mass itself settles at the included fraction (n - 2m)/n < 1
        denom = np.where(np.abs(self.msum) > 1e-9, self.msum, 1.0)
        if self.data.ndim == 1:
            return self.nsum / denom
        return self.nsum / denom[:, None]


def gotrim_step(state: GoTrimState, edge: int, graph: Graph) -> GoTrimState:
    """Endpoint weight refresh with delta-correction, pairwise averaging of the
    partial sums, then the rule's own exchange step."""
    i, j = graph.edges[edge]
    rule = state.rule
    rule.update(edge, i, j)
    for k in (i, j):
        w_new = rule.weight(k)
        delta = w_new - state.w[k]
        if delta != 0.0:
            state.nsum[k] = state.nsum[k] + delta * state.data[k]
            state.msum[k] += delta
            state.w[k] = w_new
    navg = 0.5 * (state.nsum[i] + state.nsum[j])
    state.nsum[i] = navg
    state.nsum[j] = navg
    mavg = 0.5 * (state.msum[i] + state.msum[j])
    state.msum[i] = mavg
    state.msum[j] = mavg
    rule.exchange(i, j)
    return state


def weight_error(state: GoTrimState, oracle_weights) -> float:
    """Mean absolute error of the currently applied weights."""
    return float(np.abs(state.w - np.asarray(oracle_weights, dtype=float)).mean())
