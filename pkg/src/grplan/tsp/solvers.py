"""Exact Held-Karp, greedy nearest-neighbour and the MST lower bound."""

import math

import numpy as np

from .state import all_visited

MAX_EXACT_NODES = 18


class InfeasibleError(ValueError):
    """The graph has no Hamiltonian cycle."""


def _canonical_direction(graph, tour):
    """Of a cycle and its reverse, prefer the one whose first edge is cheaper."""
    rev = tour[::-1]
    a, b = graph.weights[tour[0], tour[1]], graph.weights[rev[0], rev[1]]
    if b < a or (b == a and rev[1] < tour[1]):
        return rev
    return tour


def held_karp_solve(graph, start=0):
    """Minimum-cost Hamiltonian cycle ``([start, ..., start], cost)``.

    Bitmask dynamic program over the nodes other than ``start``; one
    vectorised relaxation per subset. Raises InfeasibleError when no cycle
    exists.
    """
    n = graph.n
    if not 3 <= n <= MAX_EXACT_NODES:
        raise ValueError(f"exact solving supports 3 <= n <= {MAX_EXACT_NODES}, got {n}")
    w = np.where(graph.adjacency, graph.weights, np.inf)
    others = [v for v in range(n) if v != start]
    m = n - 1
    wo = w[np.ix_(others, others)]
    full = (1 << m) - 1
    dp = np.full((1 << m, m), np.inf)
    parent = np.full((1 << m, m), -1, dtype=np.int64)
    for j in range(m):
        dp[1 << j, j] = w[start, others[j]]
    for mask in range(1, full + 1):
        members = [j for j in range(m) if mask >> j & 1]
        if len(members) < 2:
            continue
        for j in members:
            prev = mask ^ (1 << j)
            cand = dp[prev] + wo[:, j]
            k = int(np.argmin(cand))
            dp[mask, j] = cand[k]
            parent[mask, j] = k
    closing = dp[full] + w[others, start]
    last = int(np.argmin(closing))
    cost = float(closing[last])
    if math.isinf(cost):
        raise InfeasibleError("graph has no Hamiltonian cycle")
    path, mask, j = [], full, last
    while j >= 0:
        path.append(others[j])
        prev = int(parent[mask, j])
        mask ^= 1 << j
        j = prev
    tour = [start] + path[::-1] + [start]
    tour = _canonical_direction(graph, tour)
    return tour, graph.tour_cost(tour)


def greedy_tour(graph, start=0):
    """Nearest unvisited neighbour, then close the cycle.

    Returns ``(tour, cost)``, or ``(None, inf)`` when the walk dead-ends.
    Ties go to the lowest node index.
    """
    n = graph.n
    tour, visited, cur = [start], {start}, start
    while len(visited) < n:
        cands = [v for v in graph.neighbors(cur) if v not in visited]
        if not cands:
            return None, math.inf
        cur = min(cands, key=lambda v: (graph.weights[tour[-1], v], v))
        tour.append(cur)
        visited.add(cur)
    if not graph.adjacency[cur, start]:
        return None, math.inf
    tour.append(start)
    return tour, graph.tour_cost(tour)


def mst_weight(graph, nodes):
    """Prim's algorithm on the induced subgraph; inf if it is disconnected."""
    nodes = list(dict.fromkeys(nodes))
    if len(nodes) <= 1:
        return 0.0
    w = np.where(graph.adjacency, graph.weights, np.inf)[np.ix_(nodes, nodes)]
    in_tree = np.zeros(len(nodes), dtype=bool)
    in_tree[0] = True
    dist = w[0].copy()
    total = 0.0
    for _ in range(len(nodes) - 1):
        d = np.where(in_tree, np.inf, dist)
        k = int(np.argmin(d))
        if math.isinf(d[k]):
            return math.inf
        total += float(d[k])
        in_tree[k] = True
        dist = np.minimum(dist, w[k])
    return total


def mst_heuristic(graph, state):
    """MST weight over the unvisited nodes plus the current and start nodes."""
    if state.closed:
        return 0.0
    if all_visited(graph, state):
        return float(graph.weights[state.current, state.start]) if graph.adjacency[state.current, state.start] else math.inf
    nodes = [state.current, state.start] + [v for v in range(graph.n) if not state.visited >> v & 1]
    return mst_weight(graph, nodes)
