"""Best-first search with node-expansion accounting.

``successors(state)`` yields ``(action, next_state, step_cost)`` triples.
Heuristics are either ``h(state)`` or, with ``batch_heuristic=True``,
``h(parent, children) -> sequence of floats`` so a learned model can score
all children of an expansion in one forward pass (``parent`` is None for the
start state). A heuristic value of ``inf`` prunes the node.
"""

import heapq
import math
from dataclasses import dataclass, field
from itertools import count

SOLVED = "solved"
EXHAUSTED = "exhausted"
BUDGET_EXCEEDED = "budget_exceeded"

DEFAULT_BUDGET = 200_000


@dataclass
class SearchResult:
    plan: list = field(default_factory=list)
    cost: float = 0.0
    nodes_explored: int = 0
    status: str = EXHAUSTED
    states: list = field(default_factory=list)

    @property
    def solved(self):
        return self.status == SOLVED

    @property
    def plan_length(self):
        return len(self.plan)


def _search(start, successors, goal_test, heuristic, budget, key, batch_heuristic, weight_g):
    key = key or (lambda s: s)
    tie = count()

    def score(parent, children):
        if batch_heuristic:
            return list(heuristic(parent, children))
        return [heuristic(c) for c in children]

    h0 = score(None, [start])[0]
    if math.isinf(h0):
        return SearchResult(nodes_explored=0, status=EXHAUSTED)
    k0 = key(start)
    best_g = {k0: 0.0}
    parents = {k0: None}
    heap = [(h0, 0.0, next(tie), 0.0, start)]
    closed = set()
    explored = 0
    while heap:
        _, _, _, g, state = heapq.heappop(heap)
        k = key(state)
        if k in closed:
            continue
        closed.add(k)
        explored += 1
        if goal_test(state):
            plan, states = [], [state]
            while parents[k] is not None:
                pk, action, pstate = parents[k]
                plan.append(action)
                states.append(pstate)
                k = pk
            plan.reverse()
            states.reverse()
            return SearchResult(plan, g, explored, SOLVED, states)
        if explored >= budget:
            return SearchResult(nodes_explored=explored, status=BUDGET_EXCEEDED)
        children = []
        for action, nxt, cost in successors(state):
            nk = key(nxt)
            ng = g + cost
            if nk in closed or ng >= best_g.get(nk, math.inf):
                continue
            children.append((action, nxt, nk, ng))
        if not children:
            continue
        hs = score(state, [c[1] for c in children])
        for (action, nxt, nk, ng), h in zip(children, hs):
            if math.isinf(h):
                continue
            best_g[nk] = ng
            parents[nk] = (k, action, state)
            heapq.heappush(heap, (weight_g * ng + h, -ng, next(tie), ng, nxt))
    return SearchResult(nodes_explored=explored, status=EXHAUSTED)


def astar(start, successors, goal_test, heuristic=None, budget=DEFAULT_BUDGET, key=None,
          batch_heuristic=False):
    """A* on ``f = g + h``; ties go to larger ``g``, then insertion order.

    Uses a closed set keyed by ``key(state)`` (nodes are never reopened), so
    the returned cost is optimal whenever ``heuristic`` is consistent.
    """
    if heuristic is None:
        heuristic, batch_heuristic = (lambda s: 0.0), False
    return _search(start, successors, goal_test, heuristic, budget, key, batch_heuristic, 1.0)


def greedy_best_first(start, successors, goal_test, heuristic=None, budget=DEFAULT_BUDGET, key=None,
                      batch_heuristic=False):
    """Expand strictly by lowest ``h``; same tie-breaking and accounting as :func:`astar`."""
    if heuristic is None:
        heuristic, batch_heuristic = (lambda s: 0.0), False
    return _search(start, successors, goal_test, heuristic, budget, key, batch_heuristic, 0.0)


ALGORITHMS = {"astar": astar, "gbfs": greedy_best_first}
