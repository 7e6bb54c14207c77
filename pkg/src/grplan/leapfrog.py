"""Size curriculum for tours: exact data at the smallest size, self-generated data after.

Stage 0 trains on Held-Karp tours. Every later stage solves fresh, larger
graphs with A* guided by the previous stage's model, keeps the tours that
replay as valid cycles, and trains the next model on them.
"""

import csv
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .data import derive_seed, tsp_samples, tsp_trajectory, write_dataset
from .evaluation import evaluate_policy, tsp_greedy_policy
from .models.graph_grp import GraphGRP, TspHeuristic
from .search import astar
from .tsp.graph import generate_complete_graph
from .tsp.solvers import held_karp_solve
from .tsp.state import IllegalMove, TspState, tsp_key, tsp_successors

log = logging.getLogger(__name__)

STAGE_FIELDS = ["stage", "size", "source", "n_instances", "n_solved", "yield", "policy_relative_cost",
                "astar_relative_cost", "greedy_relative_cost", "baseline_policy_relative_cost",
                "baseline_astar_relative_cost"]


class LeapfrogAbort(RuntimeError):
    """A stage solved too few of its instances to train on."""


@dataclass
class LeapfrogPlan:
    sizes: list
    instances_per_size: int = 1000
    model_params: dict = field(default_factory=dict)
    seed: int = 0
    search_budget: int = 20_000
    min_yield: float = 0.2
    eval_count: int = 50
    exact_baseline: bool = False
    out_dir: object = None

    def __post_init__(self):
        sizes = list(self.sizes)
        if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"sizes must be non-empty and strictly increasing, got {sizes}")
        if sizes[0] < 3:
            raise ValueError("the smallest size must have at least 3 nodes")
        self.sizes = sizes


@dataclass
class LeapfrogResult:
    models: list
    metrics: list


def astar_tour(model, graph, start, budget):
    """Tour from ``start`` found by A* with the model heuristic, or None."""
    res = astar(TspState.initial(start), tsp_successors(graph), lambda s: s.closed,
                TspHeuristic(model, graph), budget=budget, key=tsp_key, batch_heuristic=True)
    return [start] + res.plan if res.solved else None


def astar_relative_cost(model, graphs, optimal, budget):
    ratios = []
    for g, opt in zip(graphs, optimal):
        tour = astar_tour(model, g, 0, budget)
        if tour is not None:
            ratios.append(g.tour_cost(tour) / opt)
    return float(np.mean(ratios)) if ratios else math.nan


def _stage_graphs(plan, stage, size, count, salt):
    return [generate_complete_graph(size, derive_seed(plan.seed, (salt * 1000 + stage) * 100_000 + i))
            for i in range(count)]


def _train(plan, trajectories, stage):
    samples = [s for t in trajectories for s in tsp_samples(t)]
    params = {**plan.model_params, "random_state": derive_seed(plan.seed, stage)}
    return GraphGRP(**params).fit(samples), samples


def _exact_trajectories(graphs, rng):
    starts = rng.integers(0, graphs[0].n, size=len(graphs))
    return [tsp_trajectory(g, held_karp_solve(g, int(s))[0]) for g, s in zip(graphs, starts)]


def _search_trajectories(model, graphs, rng, budget):
    starts = rng.integers(0, graphs[0].n, size=len(graphs))
    out = []
    for g, s in zip(graphs, starts):
        tour = astar_tour(model, g, int(s), budget)
        if tour is None:
            continue
        try:
            out.append(tsp_trajectory(g, tour))
        except (IllegalMove, ValueError):
            log.warning("discarding a search tour that does not replay")
    return out


def leapfrog_run(plan):
    """Train one model per size; returns the models and one metrics row per stage."""
    models, metrics = [], []
    for stage, size in enumerate(plan.sizes):
        rng = np.random.default_rng(derive_seed(plan.seed, 10_000 + stage))
        graphs = _stage_graphs(plan, stage, size, plan.instances_per_size, salt=1)
        if stage == 0:
            trajs, source = _exact_trajectories(graphs, rng), "exact"
        else:
            trajs, source = _search_trajectories(models[-1], graphs, rng, plan.search_budget), "astar"
        yield_ = len(trajs) / len(graphs)
        if yield_ < plan.min_yield:
            raise LeapfrogAbort(f"stage {stage} (n={size}) solved {len(trajs)}/{len(graphs)} instances, "
                                f"below the {plan.min_yield:.0%} floor")
        model, samples = _train(plan, trajs, stage)
        models.append(model)

        evals = _stage_graphs(plan, stage, size, plan.eval_count, salt=2)
        optimal = [held_karp_solve(g)[1] for g in evals]
        row = {
            "stage": stage, "size": size, "source": source, "n_instances": len(graphs),
            "n_solved": len(trajs), "yield": yield_,
            "policy_relative_cost": evaluate_policy(model, evals, optimal_costs=optimal).relative_cost,
            "astar_relative_cost": astar_relative_cost(model, evals, optimal, plan.search_budget),
            "greedy_relative_cost": evaluate_policy(tsp_greedy_policy, evals, optimal_costs=optimal).relative_cost,
            "baseline_policy_relative_cost": "", "baseline_astar_relative_cost": "",
        }
        baseline = None
        if plan.exact_baseline and stage > 0:
            baseline, _ = _train(plan, _exact_trajectories(graphs, rng), stage)
            row["baseline_policy_relative_cost"] = evaluate_policy(baseline, evals, optimal_costs=optimal).relative_cost
            row["baseline_astar_relative_cost"] = astar_relative_cost(baseline, evals, optimal, plan.search_budget)
        metrics.append(row)
        log.info("stage %d n=%d yield %.2f policy %.4f astar %.4f greedy %.4f", stage, size, yield_,
                 row["policy_relative_cost"], row["astar_relative_cost"], row["greedy_relative_cost"])
        if plan.out_dir is not None:
            _write_stage(plan.out_dir, stage, size, samples, model, baseline, row)
    return LeapfrogResult(models, metrics)


def _write_stage(out_dir, stage, size, samples, model, baseline, row):
    d = os.path.join(out_dir, f"stage{stage}_n{size}")
    os.makedirs(d, exist_ok=True)
    write_dataset(samples, os.path.join(d, "dataset.grpd"), domain="tsp")
    model.save(os.path.join(d, "model.ckpt"))
    if baseline is not None:
        baseline.save(os.path.join(d, "baseline.ckpt"))
    write_metrics_csv(os.path.join(d, "metrics.csv"), [row], STAGE_FIELDS)


def write_metrics_csv(path, rows, fields):
    """Fresh CSV (never appended); floats are written with repr for exact round trips."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
