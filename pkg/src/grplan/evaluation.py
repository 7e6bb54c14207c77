"""Policy rollouts and search benchmarks for both domains.

A Sokoban policy is called as ``policy(problems, states) -> actions`` on a
batch of same-shaped instances; a tour policy as ``policy(graph, states) ->
nodes`` where a node of ``None`` signals a dead end. Trained estimators are
wrapped by :func:`model_policy`.
"""

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .models.graph_grp import GraphGRP, TspHeuristic, legal_node_mask
from .models.sokoban_grp import SokobanGRP, SokobanHeuristic, choose, legal_mask
from .search import ALGORITHMS, DEFAULT_BUDGET
from .sokoban.expert import expert_solve, manhattan_heuristic
from .sokoban.rules import (
    SokobanProblem,
    apply_action,
    goal_observation,
    is_goal,
    render_observation,
    successors,
)
from .tsp.solvers import held_karp_solve, mst_heuristic
from .tsp.state import TspState, legal_moves, tsp_key, tsp_step, tsp_successors


@dataclass
class PolicyMetrics:
    """Sokoban fills ``success_rate``; tours also fill the relative-cost fields.

    ``relative_cost`` averages policy cost / optimal cost over the rollouts
    that closed a cycle; dead ends only lower ``success_rate``.
    """

    domain: str
    n_instances: int
    n_rollouts: int
    success_rate: float
    relative_cost: float = math.nan
    per_instance: list = field(default_factory=list)

    def as_row(self):
        row = asdict(self)
        row.pop("per_instance")
        return row


# Policies ------------------------------------------------------------------

def model_policy(model, mode="deterministic", rng=None):
    """Batch policy that runs ``model`` once per lockstep round."""
    rng = rng if rng is not None else np.random.default_rng(0)
    if isinstance(model, SokobanGRP):
        def sokoban_policy(problems, states):
            cur = np.stack([render_observation(p, s) for p, s in zip(problems, states)])
            goal = np.stack([goal_observation(p) for p in problems])
            logits, _ = model.forward(cur, goal)
            return [choose(lg, legal_mask(p, s), mode, rng) for lg, p, s in zip(logits, problems, states)]
        return sokoban_policy
    if isinstance(model, GraphGRP):
        def tsp_policy(graph, states):
            logits = model.node_logits(graph, states)
            out = []
            for lg, s in zip(logits, states):
                mask = legal_node_mask(graph, s)
                out.append(choose(lg, mask, mode, rng) if mask.any() else None)
            return out
        return tsp_policy
    raise TypeError(f"no policy wrapper for {type(model).__name__}")


class SokobanExpertPolicy:
    """Follows an optimal plan; re-plans when it meets an unseen state."""

    def __init__(self, budget=DEFAULT_BUDGET):
        self.budget = budget
        self._next = {}

    def __call__(self, problems, states):
        out = []
        for p, s in zip(problems, states):
            key = (id(p), s.key())
            if key not in self._next:
                res = expert_solve(p, budget=self.budget, state=s)
                if not res.solved:
                    raise RuntimeError("expert cannot solve a state it was asked about")
                for st, a in zip(res.states, res.plan):
                    self._next[(id(p), st.key())] = a
            out.append(self._next[key])
        return out


def tsp_greedy_policy(graph, states):
    """Cheapest edge to a legal node; ties to the lowest index."""
    out = []
    for s in states:
        moves = legal_moves(graph, s)
        out.append(min(moves, key=lambda v: (graph.weights[s.current, v], v)) if moves else None)
    return out


class TspExpertPolicy:
    """Replays the exact tour from each start node."""

    def __init__(self):
        self._tours = {}

    def __call__(self, graph, states):
        out = []
        for s in states:
            key = (id(graph), s.start)
            if key not in self._tours:
                self._tours[key] = held_karp_solve(graph, s.start)[0]
            tour = self._tours[key]
            out.append(tour[s.visited_count()])
        return out


# Rollouts ------------------------------------------------------------------

def sokoban_rollouts(policy, problems, step_budget=None):
    """Run every problem to its goal or its step budget; returns successes and step counts.

    The default budget is ``4 * H * W``, which catches cycling rollouts.
    Instances of equal shape advance in lockstep so a model sees one batch
    per round.
    """
    problems = list(problems)
    solved = [False] * len(problems)
    steps = [0] * len(problems)
    by_shape = {}
    for i, p in enumerate(problems):
        by_shape.setdefault(p.walls.shape, []).append(i)
    for shape, idx in sorted(by_shape.items()):
        budget = 4 * shape[0] * shape[1] if step_budget is None else step_budget
        states = {i: problems[i].initial for i in idx}
        active = [i for i in idx if not is_goal(problems[i], states[i])]
        for i in idx:
            solved[i] = i not in active
        for _ in range(budget):
            if not active:
                break
            actions = policy([problems[i] for i in active], [states[i] for i in active])
            still = []
            for i, a in zip(active, actions):
                states[i] = apply_action(problems[i], states[i], a)
                steps[i] += 1
                if is_goal(problems[i], states[i]):
                    solved[i] = True
                else:
                    still.append(i)
            active = still
    return solved, steps


def tsp_rollouts(policy, graph, starts=None):
    """Tour (or None on a dead end) from each start node, all starts in lockstep."""
    starts = list(range(graph.n)) if starts is None else list(starts)
    states = [TspState.initial(s) for s in starts]
    tours = [[s] for s in starts]
    alive = list(range(len(starts)))
    while alive:
        moves = policy(graph, [states[k] for k in alive])
        nxt = []
        for k, v in zip(alive, moves):
            if v is None:
                tours[k] = None
                continue
            states[k] = tsp_step(graph, states[k], v)
            tours[k].append(v)
            if not states[k].closed:
                nxt.append(k)
        alive = nxt
    return tours


def evaluate_policy(policy, instances, mode="deterministic", step_budget=None, rng=None,
                    optimal_costs=None):
    """Success rate (Sokoban) or success plus average relative cost (tours).

    ``policy`` is a trained estimator or a policy callable. For tours every
    node is used as a start; ``optimal_costs`` skips the exact solves.
    """
    instances = list(instances)
    if not callable(policy) or isinstance(policy, (SokobanGRP, GraphGRP)):
        policy = model_policy(policy, mode, rng)
    if not instances:
        raise ValueError("no instances to evaluate")
    if isinstance(instances[0], SokobanProblem):
        solved, _ = sokoban_rollouts(policy, instances, step_budget)
        return PolicyMetrics("sokoban", len(instances), len(instances), float(np.mean(solved)),
                             per_instance=[float(s) for s in solved])
    ratios, successes, rollouts, per_instance = [], 0, 0, []
    for k, g in enumerate(instances):
        opt = optimal_costs[k] if optimal_costs is not None else held_karp_solve(g)[1]
        tours = tsp_rollouts(policy, g)
        costs = [g.tour_cost(t) for t in tours if t is not None]
        successes += len(costs)
        rollouts += len(tours)
        r = [c / opt for c in costs]
        ratios.extend(r)
        per_instance.append(float(np.mean(r)) if r else math.nan)
    return PolicyMetrics("tsp", len(instances), rollouts, successes / rollouts,
                         float(np.mean(ratios)) if ratios else math.nan, per_instance)


# Search benchmark ------------------------------------------------------------

BENCH_FIELDS = ["instance_id", "algorithm", "heuristic", "status", "plan_length", "cost",
                "nodes_explored", "optimal_cost"]


def sokoban_heuristics(model=None):
    """Name -> factory(problem) returning ``(heuristic or None, batch flag)``."""
    out = {
        "blind": lambda p: (None, False),
        "manhattan": lambda p: ((lambda s: manhattan_heuristic(p, s)), False),
    }
    if model is not None:
        out["grp"] = lambda p: (SokobanHeuristic(model, p), True)
    return out


def tsp_heuristics(model=None):
    out = {
        "blind": lambda g: (None, False),
        "mst": lambda g: ((lambda s: mst_heuristic(g, s)), False),
    }
    if model is not None:
        out["grp"] = lambda g: (TspHeuristic(model, g), True)
    return out


def search_instance(instance, algorithm, heuristic, batch, budget=DEFAULT_BUDGET):
    """Run one search on a Sokoban problem or a tour graph (from node 0)."""
    search = ALGORITHMS[algorithm]
    if isinstance(instance, SokobanProblem):
        return search(instance.initial, successors(instance), lambda s: is_goal(instance, s),
                      heuristic, budget=budget, key=lambda s: s.key(), batch_heuristic=batch)
    return search(TspState.initial(0), tsp_successors(instance), lambda s: s.closed,
                  heuristic, budget=budget, key=tsp_key, batch_heuristic=batch)


def benchmark_search(heuristics, instances, algorithms=("astar",), budget=DEFAULT_BUDGET,
                     optimal_costs=None):
    """One row per (instance, algorithm, heuristic); budget overruns are rows too.

    Returns ``(rows, timings)``. Wall-clock times are kept apart from the rows
    so the rows are reproducible byte for byte.
    """
    rows, timings = [], []
    for k, inst in enumerate(instances):
        opt = optimal_costs[k] if optimal_costs is not None else math.nan
        for algo in algorithms:
            for name, factory in heuristics.items():
                h, batch = factory(inst)
                t0 = time.perf_counter()
                res = search_instance(inst, algo, h, batch, budget)
                wall_ms = (time.perf_counter() - t0) * 1000.0
                rows.append({
                    "instance_id": k, "algorithm": algo, "heuristic": name, "status": res.status,
                    "plan_length": res.plan_length if res.solved else "",
                    "cost": repr(float(res.cost)) if res.solved else "",
                    "nodes_explored": res.nodes_explored,
                    "optimal_cost": "" if math.isnan(opt) else repr(float(opt)),
                })
                timings.append({"instance_id": k, "algorithm": algo, "heuristic": name,
                                "wall_ms": round(wall_ms, 3)})
    return rows, timings


def paired_medians(rows):
    """Median nodes explored per (algorithm, heuristic)."""
    groups = {}
    for r in rows:
        groups.setdefault((r["algorithm"], r["heuristic"]), []).append(r["nodes_explored"])
    return {k: float(np.median(v)) for k, v in sorted(groups.items())}
