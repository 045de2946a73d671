"""Undirected graphs over event types: adjacency, spectral quantities, k-hop shells.

Graphs here are small (a few hundred nodes at most), so everything is stored
dense and recomputed eagerly.  All containers are immutable after construction
and safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# full eigensolve below this size, power iteration above
_EIG_CUTOFF = 512
_POWER_TOL = 1e-10


class GraphError(ValueError):
    """Invalid graph construction or an operation outside its preconditions."""


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph with dense 0/1 adjacency.

    Invariants: adjacency is symmetric with a zero diagonal, and ``degree``
    equals its row sums.
    """

    num_nodes: int
    edges: tuple
    adjacency: np.ndarray
    degree: np.ndarray

    def __post_init__(self):
        self.adjacency.setflags(write=False)
        self.degree.setflags(write=False)


@dataclass(frozen=True)
class SpectralData:
    """Normalized Laplacian L, its largest eigenvalue, and 2L/lambda_max - I."""

    laplacian: np.ndarray
    lambda_max: float
    scaled_laplacian: np.ndarray

    def __post_init__(self):
        self.laplacian.setflags(write=False)
        self.scaled_laplacian.setflags(write=False)


@dataclass(frozen=True)
class NeighborhoodIndex:
    """Exact shortest-path shells N_v^(o) for o = 0..o_max.

    ``hops[o]`` is a list of sorted node arrays, one per source node.  Shells
    are disjoint across orders for a fixed source and N_v^(0) = {v}.
    """

    num_nodes: int
    o_max: int
    hops: dict

    def shell(self, order, node):
        return self.hops[order][node]

    def shell_mask(self, order):
        """Boolean (V, V) matrix: mask[v', v] iff v is in N_{v'}^(order)."""
        mask = np.zeros((self.num_nodes, self.num_nodes), dtype=bool)
        for vp in range(self.num_nodes):
            mask[vp, self.hops[order][vp]] = True
        return mask


def build_graph(num_nodes, edges):
    """Build a Graph from an edge list, deduplicating and validating.

    Raises GraphError for out-of-range node indices or self-loops.
    """
    if num_nodes <= 0:
        raise GraphError(f"num_nodes must be positive, got {num_nodes}")
    adj = np.zeros((num_nodes, num_nodes), dtype=np.float64)
    dedup = set()
    for u, v in edges:
        u, v = int(u), int(v)
        if u == v:
            raise GraphError(f"self-loop ({u}, {v}) is not allowed")
        if not (0 <= u < num_nodes and 0 <= v < num_nodes):
            raise GraphError(
                f"edge ({u}, {v}) out of range for {num_nodes} nodes")
        dedup.add((min(u, v), max(u, v)))
    for u, v in dedup:
        adj[u, v] = 1.0
        adj[v, u] = 1.0
    degree = adj.sum(axis=1).astype(np.int64)
    return Graph(num_nodes=num_nodes, edges=tuple(sorted(dedup)),
                 adjacency=adj, degree=degree)


def path_graph(n):
    return build_graph(n, [(i, i + 1) for i in range(n - 1)])


def ring_graph(n):
    return build_graph(n, [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n):
    return build_graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def lattice_graph(rows, cols):
    """4-neighbor grid lattice with row-major node numbering."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return build_graph(rows * cols, edges)


def _power_iteration_lambda_max(mat, rng_seed=0):
    rng = np.random.default_rng(rng_seed)
    x = rng.standard_normal(mat.shape[0])
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(10000):
        y = mat @ x
        lam = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        if np.linalg.norm(mat @ x - lam * x) <= _POWER_TOL:
            break
    return float(x @ (mat @ x))


def scaled_laplacian(g: Graph) -> SpectralData:
    """Normalized Laplacian I - D^{-1/2} A D^{-1/2} and its [-1, 1] rescaling.

    Raises GraphError if the graph has an isolated node (D^{-1/2} undefined).
    """
    isolated = np.nonzero(g.degree == 0)[0]
    if isolated.size:
        raise GraphError(f"isolated node {int(isolated[0])} has degree 0")
    dinv_sqrt = 1.0 / np.sqrt(g.degree.astype(np.float64))
    lap = np.eye(g.num_nodes) - dinv_sqrt[:, None] * g.adjacency * dinv_sqrt[None, :]
    lap = 0.5 * (lap + lap.T)  # kill round-off asymmetry
    if g.num_nodes <= _EIG_CUTOFF:
        lam_max = float(np.linalg.eigvalsh(lap)[-1])
    else:
        # the spectrum is nonnegative, so the dominant eigenvalue is lambda_max
        lam_max = _power_iteration_lambda_max(lap)
    scaled = 2.0 * lap / lam_max - np.eye(g.num_nodes)
    return SpectralData(laplacian=lap, lambda_max=lam_max, scaled_laplacian=scaled)


def khop_index(g: Graph, o_max) -> NeighborhoodIndex:
    """BFS-exact shells of shortest-path distance 0..o_max per node."""
    if o_max < 0:
        raise GraphError(f"o_max must be >= 0, got {o_max}")
    n = g.num_nodes
    neighbors = [np.nonzero(g.adjacency[v] > 0)[0] for v in range(n)]
    dist = np.full((n, n), -1, dtype=np.int64)
    for src in range(n):
        dist[src, src] = 0
        frontier = [src]
        d = 0
        while frontier:
            d += 1
            nxt = []
            for u in frontier:
                for w in neighbors[u]:
                    if dist[src, w] < 0:
                        dist[src, w] = d
                        nxt.append(w)
            frontier = nxt
    hops = {}
    for o in range(o_max + 1):
        hops[o] = [np.nonzero(dist[v] == o)[0] for v in range(n)]
    return NeighborhoodIndex(num_nodes=n, o_max=o_max, hops=hops)


def hop_distances(g: Graph) -> np.ndarray:
    """All-pairs shortest-path hop counts (-1 for unreachable pairs)."""
    idx = khop_index(g, g.num_nodes)
    dist = np.full((g.num_nodes, g.num_nodes), -1, dtype=np.int64)
    for o in range(g.num_nodes + 1):
        for v in range(g.num_nodes):
            dist[v, idx.hops[o][v]] = o
    return dist


def write_edge_list(g: Graph, path):
    """Text edge-list: a required ``nodes N`` header then one ``u v`` per line."""
    with open(path, "w") as fh:
        fh.write(f"nodes {g.num_nodes}\n")
        for u, v in g.edges:
            fh.write(f"{u} {v}\n")


def read_edge_list(path) -> Graph:
    """Parse the edge-list format written by write_edge_list.

    Lines starting with ``#`` are comments.  The ``nodes N`` header must come
    before any edge.
    """
    num_nodes = None
    edges = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "nodes":
                if len(parts) != 2:
                    raise GraphError(f"{path}:{lineno}: malformed header {raw!r}")
                num_nodes = int(parts[1])
                continue
            if num_nodes is None:
                raise GraphError(f"{path}:{lineno}: missing 'nodes N' header")
            if len(parts) != 2:
                raise GraphError(f"{path}:{lineno}: expected 'u v', got {raw!r}")
            edges.append((int(parts[0]), int(parts[1])))
    if num_nodes is None:
        raise GraphError(f"{path}: missing 'nodes N' header")
    return build_graph(num_nodes, edges)
