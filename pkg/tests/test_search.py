import heapq
import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from grplan.search import BUDGET_EXCEEDED, EXHAUSTED, SOLVED, astar, greedy_best_first


def random_digraph(seed, n=12, p=0.3):
    rng = np.random.default_rng(seed)
    edges = {u: [] for u in range(n)}
    for u in range(n):
        for v in range(n):
            if u != v and rng.random() < p:
                edges[u].append((v, float(rng.integers(1, 10))))
    return edges


def dijkstra(edges, src, dst):
    dist = {src: 0.0}
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if u == dst:
            return d
        if d > dist.get(u, math.inf):
            continue
        for v, w in edges[u]:
            if d + w < dist.get(v, math.inf):
                dist[v] = d + w
                heapq.heappush(heap, (d + w, v))
    return None


def succ_of(edges):
    return lambda u: ((v, v, w) for v, w in edges[u])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_astar_blind_matches_dijkstra(seed):
    edges = random_digraph(seed)
    res = astar(0, succ_of(edges), lambda u: u == 11)
    ref = dijkstra(edges, 0, 11)
    if ref is None:
        assert res.status == EXHAUSTED
    else:
        assert res.status == SOLVED and res.cost == ref


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_astar_with_consistent_heuristic_is_optimal(seed):
    # exact distances to the goal are a consistent heuristic
    edges = random_digraph(seed)
    ref = dijkstra(edges, 0, 11)
    if ref is None:
        return
    h = {u: (dijkstra(edges, u, 11) or 0.0) * 0.5 for u in edges}
    res = astar(0, succ_of(edges), lambda u: u == 11, lambda u: h[u])
    assert res.cost == ref


def test_plan_replays_to_reported_cost():
    edges = random_digraph(3, n=15, p=0.25)
    res = astar(0, succ_of(edges), lambda u: u == 14)
    assert res.solved
    cost, u = 0.0, 0
    for a in res.plan:
        cost += dict(edges[u])[a]
        u = a
    assert u == 14 and cost == res.cost
    assert res.states[0] == 0 and res.states[-1] == 14


def test_budget_exceeded_status():
    line = {i: [(i + 1, 1.0)] for i in range(100)}
    line[100] = []
    res = astar(0, succ_of(line), lambda u: u == 100, budget=10)
    assert res.status == BUDGET_EXCEEDED and res.nodes_explored == 10
    assert astar(0, succ_of(line), lambda u: u == 100, budget=101).solved


def test_start_state_counts_as_explored():
    res = astar(7, lambda u: iter(()), lambda u: u == 7)
    assert res.solved and res.nodes_explored == 1 and res.plan == []


def test_infinite_heuristic_prunes():
    edges = {0: [(1, 1.0), (2, 5.0)], 1: [(3, 1.0)], 2: [(3, 1.0)], 3: []}
    res = astar(0, succ_of(edges), lambda u: u == 3, lambda u: math.inf if u == 1 else 0.0)
    assert res.cost == 6.0


def test_ties_prefer_deeper_nodes():
    # two goal paths of equal f; the deeper frontier node is expanded first
    edges = {0: [(1, 1.0), (2, 1.0)], 1: [(3, 1.0)], 2: [], 3: []}
    res = astar(0, succ_of(edges), lambda u: u == 3, lambda u: {0: 2.0, 1: 1.0, 2: 1.0, 3: 0.0}[u])
    assert res.nodes_explored == 3


def test_greedy_expands_by_h_only():
    edges = {0: [(1, 10.0), (2, 1.0)], 1: [(3, 10.0)], 2: [(4, 1.0)], 4: [(3, 1.0)], 3: []}
    h = {0: 3, 1: 1, 2: 2, 3: 0, 4: 1}
    res = greedy_best_first(0, succ_of(edges), lambda u: u == 3, lambda u: float(h[u]))
    assert res.plan == [1, 3] and res.cost == 20.0
    assert astar(0, succ_of(edges), lambda u: u == 3, lambda u: float(h[u])).cost == 3.0


def test_batch_heuristic_receives_parent_and_children():
    calls = []
    edges = {0: [(1, 1.0), (2, 1.0)], 1: [], 2: []}

    def h(parent, children):
        calls.append((parent, list(children)))
        return [0.0] * len(children)

    astar(0, succ_of(edges), lambda u: u == 2, h, batch_heuristic=True)
    assert calls[0] == (None, [0])
    assert calls[1] == (0, [1, 2])
