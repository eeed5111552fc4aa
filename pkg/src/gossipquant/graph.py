"""Gossip-network topologies, edge-sampling distributions, and Laplacian spectra.

Graphs are undirected, simple, and connected.  Edges are canonicalized as
(min, max) pairs sorted lexicographically; every per-edge array in the
package (sampling probabilities, dual variables, ...) is indexed in this
order, which keeps runs reproducible across rebuilds of the same topology.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_RING_DEGREE = 4
CONNECT_RETRIES = 100


class TopologyError(ValueError):
    """Raised for invalid topology parameters or unreachable connectivity."""


@dataclass(frozen=True)
class Graph:
    """Undirected connected graph with canonical edge ordering.

    Attributes:
        n: number of nodes, labeled 0..n-1.
        edges: tuple of (i, j) pairs with i < j, sorted lexicographically.
        positions: optional (n, 2) coordinates (geometric graphs only).
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    positions: np.ndarray | None = None

    # derived, filled in __post_init__
    degrees: np.ndarray = field(init=False, repr=False)
    neighbors: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    incident_edges: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    edge_array: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.n < 2:
            raise TopologyError("graph needs at least 2 nodes")
        canon = tuple(sorted((min(i, j), max(i, j)) for i, j in self.edges))
        if len(set(canon)) != len(canon):
            raise TopologyError("duplicate edges")
        for i, j in canon:
            if i == j:
                raise TopologyError("self-loop")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise TopologyError("edge endpoint out of range")
        object.__setattr__(self, "edges", canon)
        edge_array = np.asarray(canon, dtype=np.int64).reshape(len(canon), 2)
        adjacency: list[list[int]] = [[] for _ in range(self.n)]
        incident: list[list[int]] = [[] for _ in range(self.n)]
        for e, (i, j) in enumerate(canon):
            adjacency[i].append(j)
            adjacency[j].append(i)
            incident[i].append(e)
            incident[j].append(e)
        degrees = np.array([len(a) for a in adjacency], dtype=np.int64)
        object.__setattr__(self, "edge_array", edge_array)
        object.__setattr__(self, "degrees", degrees)
        object.__setattr__(self, "neighbors", tuple(tuple(a) for a in adjacency))
        object.__setattr__(self, "incident_edges", tuple(tuple(a) for a in incident))
        if not _connected(self.n, adjacency):
            raise TopologyError("graph is not connected")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def laplacian(self) -> np.ndarray:
        """Unweighted graph Laplacian D - A as a dense symmetric matrix."""
        lap = np.diag(self.degrees.astype(float))
        for i, j in self.edges:
            lap[i, j] -= 1.0
            lap[j, i] -= 1.0
        return lap

    def to_json(self) -> str:
        payload: dict = {"n": self.n, "edges": [list(e) for e in self.edges]}
        if self.positions is not None:
            payload["positions"] = np.asarray(self.positions).tolist()
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "Graph":
        payload = json.loads(text)
        positions = payload.get("positions")
        return cls(
            n=int(payload["n"]),
            edges=tuple((int(i), int(j)) for i, j in payload["edges"]),
            positions=None if positions is None else np.asarray(positions, dtype=float),
        )


@dataclass(frozen=True)
class EdgeDistribution:
    """Per-edge activation probabilities, in the graph's canonical edge order."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        if np.any(probs <= 0):
            raise ValueError("all edge probabilities must be positive")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("edge probabilities must sum to 1")


@dataclass(frozen=True)
class SpectralSummary:
    """Spectral quantities of a sampled gossip network.

    lambda2: second-smallest eigenvalue of the unweighted Laplacian.
    gap: smallest positive eigenvalue of the probability-weighted Laplacian.
    connectivity: lambda2 / |E|.
    """

    lambda2: float
    gap: float
    connectivity: float


def _connected(n: int, adjacency: list[list[int]]) -> bool:
    seen = [False] * n
    stack = [0]
    seen[0] = True
    count = 1
    while stack:
        u = stack.pop()
        for v in adjacency[u]:
            if not seen[v]:
                seen[v] = True
                count += 1
                stack.append(v)
    return count == n


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise TopologyError("cycle needs n >= 3")
    edges = [(k, (k + 1) % n) for k in range(n)]
    return Graph(n=n, edges=tuple(edges))


def complete_graph(n: int) -> Graph:
    if n < 2:
        raise TopologyError("complete graph needs n >= 2")
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return Graph(n=n, edges=tuple(edges))


def geometric_graph(
    n: int,
    radius: float | None = None,
    target_edges: int | None = None,
    seed: int | np.random.Generator = 0,
) -> Graph:
    """Random geometric graph on the unit square.

    Nodes are placed uniformly at random and connected iff their Euclidean
    distance is at most ``radius``.  When ``target_edges`` is given instead,
    the radius is set between the ``target_edges``-th and next smallest
    pairwise distance of the sampled layout, so the edge count is exact.
    Layouts are resampled (fresh draws from the same stream) until the graph
    is connected, up to CONNECT_RETRIES attempts.
    """
    if (radius is None) == (target_edges is None):
        raise TopologyError("give exactly one of radius or target_edges")
    if radius is not None and not 0 < radius < math.sqrt(2):
        raise TopologyError("radius must lie in (0, sqrt(2))")
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    for _ in range(CONNECT_RETRIES):
        pos = rng.random((n, 2))
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=2))
        iu = np.triu_indices(n, k=1)
        pair_dist = dist[iu]
        if target_edges is not None:
            if not 0 < target_edges < len(pair_dist):
                raise TopologyError("target_edges out of range")
            order = np.sort(pair_dist)
            r = 0.5 * (order[target_edges - 1] + order[target_edges])
        else:
            r = radius
        mask = pair_dist <= r
        edges = tuple((int(i), int(j)) for i, j, m in zip(iu[0], iu[1], mask) if m)
        try:
            return Graph(n=n, edges=edges, positions=pos)
        except TopologyError:
            continue
    raise TopologyError("could not draw a connected geometric graph; increase radius")


def watts_strogatz_graph(
    n: int,
    ring_degree: int = DEFAULT_RING_DEGREE,
    rewire_prob: float = 0.4,
    seed: int | np.random.Generator = 0,
) -> Graph:
    """Watts-Strogatz small world: ring lattice with random rewiring.

    Each forward ring edge is rewired with probability ``rewire_prob`` to a
    uniformly chosen new endpoint, skipping self-loops and duplicates.
    Rewired layouts are resampled until connected.
    """
    if ring_degree % 2 != 0 or ring_degree < 2:
        raise TopologyError("ring_degree must be a positive even integer")
    if not 0 <= rewire_prob <= 1:
        raise TopologyError("rewire_prob must lie in [0, 1]")
    if n <= ring_degree:
        raise TopologyError("need n > ring_degree")
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    half = ring_degree // 2
    for _ in range(CONNECT_RETRIES):
        edge_set = {(min(i, (i + off) % n), max(i, (i + off) % n))
                    for i in range(n) for off in range(1, half + 1)}
        for i in range(n):
            for off in range(1, half + 1):
                j = (i + off) % n
                key = (min(i, j), max(i, j))
                if key not in edge_set or rng.random() >= rewire_prob:
                    continue
                candidates = [w for w in range(n)
                              if w != i and (min(i, w), max(i, w)) not in edge_set]
                if not candidates:
                    continue
                w = candidates[rng.integers(len(candidates))]
                edge_set.remove(key)
                edge_set.add((min(i, w), max(i, w)))
        try:
            return Graph(n=n, edges=tuple(sorted(edge_set)))
        except TopologyError:
            continue
    raise TopologyError("could not rewire into a connected graph")


def build_topology(kind: str, n: int, seed: int | np.random.Generator = 0, **params) -> Graph:
    """Construct one of the supported test topologies.

    kind is one of "cycle", "complete", "geometric", "watts_strogatz";
    kind-specific parameters are passed through (radius / target_edges for
    geometric, ring_degree / rewire_prob for watts_strogatz).
    """
    if n < 3:
        raise TopologyError("topologies need n >= 3")
    if kind == "cycle":
        return cycle_graph(n)
    if kind == "complete":
        return complete_graph(n)
    if kind == "geometric":
        return geometric_graph(n, seed=seed, **params)
    if kind == "watts_strogatz":
        return watts_strogatz_graph(n, seed=seed, **params)
    raise TopologyError(f"unknown topology kind: {kind!r}")


def edge_probabilities(graph: Graph) -> EdgeDistribution:
    """Standard gossip edge sampling: p_e = (1/n) * (1/d_i + 1/d_j).

    Summing over edges, each node contributes d_k * 1/(n d_k) = 1/n, so the
    probabilities add up to exactly 1 for any graph.
    """
    deg = graph.degrees
    ei = graph.edge_array[:, 0]
    ej = graph.edge_array[:, 1]
    probs = (1.0 / deg[ei] + 1.0 / deg[ej]) / graph.n
    return EdgeDistribution(probs=probs)


def weighted_laplacian(graph: Graph, dist: EdgeDistribution) -> np.ndarray:
    """Probability-weighted Laplacian: sum_e p_e (e_i - e_j)(e_i - e_j)^T."""
    if len(dist.probs) != graph.num_edges:
        raise ValueError("distribution does not match graph")
    lap = np.zeros((graph.n, graph.n))
    for p, (i, j) in zip(dist.probs, graph.edges):
        lap[i, i] += p
        lap[j, j] += p
        lap[i, j] -= p
        lap[j, i] -= p
    return lap


def spectral_summary(graph: Graph, dist: EdgeDistribution | None = None) -> SpectralSummary:
    """Second Laplacian eigenvalue, weighted spectral gap, and connectivity."""
    if dist is None:
        dist = edge_probabilities(graph)
    lam = np.linalg.eigvalsh(graph.laplacian())
    lam_weighted = np.linalg.eigvalsh(weighted_laplacian(graph, dist))
    lambda2 = float(lam[1])
    gap = float(lam_weighted[1])
    return SpectralSummary(
        lambda2=lambda2,
        gap=gap,
        connectivity=lambda2 / graph.num_edges,
    )


def sample_edge(dist: EdgeDistribution, rng: np.random.Generator) -> int:
    """Draw a single edge index with probability p_e."""
    return int(rng.choice(len(dist.probs), p=dist.probs))


def sample_edge_stream(dist: EdgeDistribution, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` edge indices in one vectorized call (deterministic per rng state)."""
    if size == 0:
        return np.empty(0, dtype=np.int64)
    return rng.choice(len(dist.probs), size=size, p=dist.probs).astype(np.int64)
