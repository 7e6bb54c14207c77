"""Symmetric weighted graphs and their generators."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Undirected graph with weights in [0, 1] on present edges.

    ``weights[u, v]`` is meaningful only where ``adjacency[u, v]`` is True.
    """

    adjacency: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=bool)
        w = np.where(adj, np.asarray(self.weights, dtype=np.float64), 0.0)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got {adj.shape}")
        if adj.diagonal().any():
            raise ValueError("self-loops are not allowed")
        if not (np.array_equal(adj, adj.T) and np.array_equal(w, w.T)):
            raise ValueError("graph must be symmetric")
        if w.min(initial=0.0) < 0.0 or w.max(initial=0.0) > 1.0:
            raise ValueError("edge weights must lie in [0, 1]")
        adj.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "weights", w)

    @property
    def n(self):
        return self.adjacency.shape[0]

    def has_edge(self, u, v):
        return bool(self.adjacency[u, v])

    def weight(self, u, v):
        if not self.adjacency[u, v]:
            raise KeyError(f"no edge ({u}, {v})")
        return float(self.weights[u, v])

    def neighbors(self, u):
        return [int(v) for v in np.flatnonzero(self.adjacency[u])]

    def edges(self):
        us, vs = np.nonzero(np.triu(self.adjacency))
        return [(int(u), int(v), float(self.weights[u, v])) for u, v in zip(us, vs)]

    def tour_cost(self, tour):
        """Cost of a closed node sequence ``[s, ..., s]``."""
        return float(sum(self.weight(u, v) for u, v in zip(tour[:-1], tour[1:])))

    def is_hamiltonian_cycle(self, tour):
        return (len(tour) == self.n + 1 and tour[0] == tour[-1]
                and sorted(tour[:-1]) == list(range(self.n))
                and all(self.has_edge(u, v) for u, v in zip(tour[:-1], tour[1:])))

    def __eq__(self, other):
        return (isinstance(other, WeightedGraph) and np.array_equal(self.adjacency, other.adjacency)
                and np.array_equal(self.weights, other.weights))

    @classmethod
    def from_edges(cls, n, edges):
        adj = np.zeros((n, n), dtype=bool)
        w = np.zeros((n, n))
        for u, v, wt in edges:
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            adj[u, v] = adj[v, u] = True
            w[u, v] = w[v, u] = wt
        return cls(adj, w)


def generate_complete_graph(n, rng_seed):
    """All n(n-1)/2 edges with i.i.d. Uniform[0, 1] weights."""
    if n < 3:
        raise ValueError("complete TSP graphs need n >= 3")
    rng = np.random.default_rng(rng_seed)
    iu = np.triu_indices(n, k=1)
    w = np.zeros((n, n))
    w[iu] = rng.uniform(0.0, 1.0, size=len(iu[0]))
    w = w + w.T
    return WeightedGraph(~np.eye(n, dtype=bool), w)


def generate_chord_graph(n, rng_seed):
    """Cycle 0-1-...-(n-1)-0 plus up to 2n distinct random chords.

    Duplicate edges and self-loops are resampled. Small graphs cannot hold
    2n chords; they become complete.
    """
    if n < 4:
        raise ValueError("chord graphs need n >= 4")
    rng = np.random.default_rng(rng_seed)
    adj = np.zeros((n, n), dtype=bool)
    w = np.zeros((n, n))
    for i in range(n):
        j = (i + 1) % n
        adj[i, j] = adj[j, i] = True
        w[i, j] = w[j, i] = rng.uniform()
    n_chords = min(2 * n, n * (n - 1) // 2 - n)
    placed = 0
    while placed < n_chords:
        u, v = rng.integers(n, size=2)
        if u == v or adj[u, v]:
            continue
        adj[u, v] = adj[v, u] = True
        w[u, v] = w[v, u] = rng.uniform()
        placed += 1
    return WeightedGraph(adj, w)


def write_graph(path, graph):
    edges = graph.edges()
    with open(path, "w") as fh:
        fh.write(f"{graph.n} {len(edges)}\n")
        for u, v, wt in edges:
            fh.write(f"{u} {v} {wt!r}\n")


def read_graph(path):
    with open(path) as fh:
        n, m = map(int, fh.readline().split())
        edges = []
        for _ in range(m):
            u, v, wt = fh.readline().split()
            edges.append((int(u), int(v), float(wt)))
    return WeightedGraph.from_edges(n, edges)


def write_tour(path, tour):
    with open(path, "w") as fh:
        fh.write(" ".join(map(str, tour)) + "\n")


def read_tour(path):
    with open(path) as fh:
        return [int(t) for t in fh.read().split()]
