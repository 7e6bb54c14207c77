"""Optimal Sokoban planner and the Manhattan baseline heuristic."""

from itertools import permutations

from ..search import DEFAULT_BUDGET, SearchResult, astar
from .rules import apply_action, is_goal, successors


def manhattan_heuristic(problem, state):
    """Minimum-cost matching of objects to goals under Manhattan distance."""
    objects, goals = list(state.objects), list(problem.goals)
    if len(objects) == 1:
        (o,), (g,) = objects, goals
        return float(abs(o[0] - g[0]) + abs(o[1] - g[1]))
    if not objects:
        return 0.0
    best = min(
        sum(abs(o[0] - g[0]) + abs(o[1] - g[1]) for o, g in zip(objects, perm))
        for perm in permutations(goals)
    )
    return float(best)


def _key(state):
    return state.key()


def _canonical_plan(problem, start, length):
    """Lexicographically smallest plan of exactly ``length`` steps (Up<Down<Left<Right).

    Depth-first with Manhattan pruning; ``failed`` remembers the largest
    remaining budget with which a state was already shown to be a dead end.
    """
    failed = {}

    def dfs(state, remaining):
        if remaining == 0:
            return [] if is_goal(problem, state) else None
        if manhattan_heuristic(problem, state) > remaining:
            return None
        k = state.key()
        if failed.get(k, -1) >= remaining:
            return None
        for a in range(4):
            nxt = apply_action(problem, state, a)
            if nxt is state:
                continue
            rest = dfs(nxt, remaining - 1)
            if rest is not None:
                return [a] + rest
        failed[k] = remaining
        return None

    return dfs(start, length)


def expert_solve(problem, budget=DEFAULT_BUDGET, state=None, canonical=True):
    """Minimum-step plan by A* with the (consistent) matching Manhattan bound.

    With ``canonical`` the optimal plan is replaced by the lexicographically
    smallest plan of the same length, so equal situations always get the
    same expert action. The plan is replayed and checked before returning.
    """
    start = problem.initial if state is None else state
    result = astar(start, successors(problem), lambda s: is_goal(problem, s),
                   lambda s: manhattan_heuristic(problem, s), budget=budget, key=_key)
    if not result.solved:
        return result
    plan = result.plan
    if canonical and plan:
        plan = _canonical_plan(problem, start, len(plan))
    states = [start]
    for a in plan:
        states.append(apply_action(problem, states[-1], a))
    if not is_goal(problem, states[-1]):
        raise RuntimeError("expert plan does not reach the goal")
    return SearchResult(plan, float(len(plan)), result.nodes_explored, result.status, states)
