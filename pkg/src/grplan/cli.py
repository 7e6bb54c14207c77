"""Command-line harness: generation, collection, training, evaluation, benchmarks.

Every subcommand reads an optional JSON config, applies flag overrides,
writes its outputs plus ``manifest.json`` under ``--out``, and exits 0 only
when every requested row was produced. A manifest is itself a valid
``--config``, which reruns the recorded settings.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .data import DatasetError, read_dataset, write_dataset
from .evaluation import (
    BENCH_FIELDS,
    benchmark_search,
    evaluate_policy,
    paired_medians,
    sokoban_heuristics,
    tsp_greedy_policy,
    tsp_heuristics,
)
from .experiments import (
    ABLATIONS,
    TEST,
    TRAIN,
    config_hash,
    run_sokoban_ablation,
    sokoban_levels,
    sokoban_samples,
    source_digest,
    tsp_graphs,
    tsp_training_samples,
)
from .leapfrog import STAGE_FIELDS, LeapfrogPlan, leapfrog_run, write_metrics_csv
from .models import GraphGRP, SokobanGRP, load_model
from .sokoban.expert import expert_solve
from .sokoban.generator import GenerationError, check_level
from .sokoban.rules import load_levels, save_levels
from .tsp.graph import read_graph, write_graph
from .tsp.solvers import held_karp_solve

log = logging.getLogger("grplan")

SCHEMAS = {
    "levels.csv": 1, "graphs.csv": 1, "collect.csv": 1, "train.csv": 1, "eval.csv": 1,
    "bench.csv": 1, "bench_timing.csv": 1, "ablation.csv": 1, "leapfrog.csv": 1,
}

DEFAULTS = {
    "gen-levels": {"domain": "sokoban", "size": 9, "count": 100, "objects": 1},
    "gen-graphs": {"domain": "tsp", "size": 4, "count": 100, "kind": "complete"},
    "collect": {"n_bootstrap": None, "sampling": "uniform"},
    "train": {"model": {}},
    "eval": {"mode": "deterministic", "budget": None},
    "bench-search": {"algorithms": ["astar"], "heuristics": None, "budget": 200_000},
    "ablate": {"domain": "sokoban", "grid": "depth", "size": 7, "count": 500, "test_count": 100,
               "model": {"depth": 8, "filters": 32, "epochs": 10, "dtype": "float32"}},
    "leapfrog": {"domain": "tsp", "sizes": [4, 5, 6], "count": 1000, "eval_count": 50,
                 "exact_baseline": True, "budget": 20_000, "model": {}},
}


class CliError(Exception):
    pass


# Helpers -------------------------------------------------------------------

def resolve_config(args):
    cfg = dict(DEFAULTS[args.command])
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        if "command" in loaded and "config" in loaded:  # a manifest from an earlier run
            if loaded["command"] != args.command:
                raise CliError(f"manifest is for {loaded['command']!r}, not {args.command!r}")
            loaded = loaded["config"]
        cfg.update(loaded)
    for flag in ("seed", "domain", "size", "count", "budget", "input", "model_path", "dataset"):
        value = getattr(args, flag, None)
        if value is not None:
            cfg[flag] = value
    cfg.setdefault("seed", 0)
    return cfg


def write_manifest(out, command, cfg, outputs):
    manifest = {
        "command": command,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "code_version": f"{__version__}+{source_digest()}",
        "schemas": {name: SCHEMAS[name] for name in outputs if name in SCHEMAS},
        "outputs": sorted(outputs),
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def require(cfg, key):
    if cfg.get(key) is None:
        raise CliError(f"missing required setting {key!r} (flag or config)")
    if key in ("input", "model_path", "dataset") and not os.path.exists(cfg[key]):
        raise CliError(f"{key} path does not exist: {cfg[key]}")
    return cfg[key]


def load_instances(domain, path):
    if domain == "sokoban":
        return load_levels(path)
    names = sorted(f for f in os.listdir(path) if f.endswith(".txt"))
    return [read_graph(os.path.join(path, f)) for f in names]


def _size(value):
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    text = str(value).lower()
    if "x" in text:
        h, w = text.split("x")
        return int(h), int(w)
    return int(text)


# Subcommands -----------------------------------------------------------------

def cmd_gen_levels(cfg, out):
    size = _size(cfg["size"])
    try:
        levels = sokoban_levels(size, int(cfg["count"]), cfg["seed"], TRAIN, int(cfg["objects"]))
    except GenerationError as exc:
        raise CliError(str(exc)) from exc
    save_levels(os.path.join(out, "levels.txt"), levels)
    rows = []
    for k, p in enumerate(levels):
        res = expert_solve(p, canonical=False)
        rows.append({"level_id": k, "height": p.height, "width": p.width,
                     "n_objects": len(p.goals), "contract_ok": int(check_level(p)),
                     "optimal_length": res.plan_length if res.solved else ""})
    write_metrics_csv(os.path.join(out, "levels.csv"), rows, list(rows[0]))
    return ["levels.txt", "levels.csv"], len(rows) == int(cfg["count"])


def cmd_gen_graphs(cfg, out):
    n, count = int(cfg["size"]), int(cfg["count"])
    graphs = tsp_graphs(n, count, cfg["seed"], TRAIN, cfg["kind"])
    gdir = os.path.join(out, "graphs")
    os.makedirs(gdir, exist_ok=True)
    rows = []
    for k, g in enumerate(graphs):
        write_graph(os.path.join(gdir, f"graph_{k:05d}.txt"), g)
        try:
            opt = held_karp_solve(g)[1] if n <= 18 else ""
        except ValueError:
            opt = ""
        rows.append({"graph_id": k, "n": g.n, "m": len(g.edges()), "optimal_cost": opt})
    write_metrics_csv(os.path.join(out, "graphs.csv"), rows, list(rows[0]))
    return ["graphs", "graphs.csv"], len(rows) == count


def cmd_collect(cfg, out):
    domain = require(cfg, "domain")
    instances = load_instances(domain, require(cfg, "input"))
    if domain == "sokoban":
        samples = sokoban_samples(instances, cfg["n_bootstrap"], cfg["sampling"], cfg["seed"])
    else:
        samples = tsp_training_samples(instances, cfg["seed"])
    write_dataset(samples, os.path.join(out, "dataset.grpd"), domain=domain)
    row = {"domain": domain, "n_instances": len(instances), "n_samples": len(samples)}
    write_metrics_csv(os.path.join(out, "collect.csv"), [row], list(row))
    return ["dataset.grpd", "collect.csv"], len(samples) > 0


def cmd_train(cfg, out):
    try:
        domain, samples = read_dataset(require(cfg, "dataset"))
    except DatasetError as exc:
        raise CliError(str(exc)) from exc
    cls = SokobanGRP if domain == "sokoban" else GraphGRP
    verbose = int(log.isEnabledFor(logging.INFO))
    model = cls(**{"random_state": cfg["seed"], "verbose": verbose, **cfg["model"]}).fit(samples)
    model.save(os.path.join(out, "model.ckpt"))
    rows = []
    for epoch, loss in enumerate(model.loss_curve_):
        row = {"epoch": epoch, "loss": loss}
        row.update({k: v[epoch] for k, v in sorted(model.metric_curves_.items())})
        rows.append(row)
    write_metrics_csv(os.path.join(out, "train.csv"), rows, list(rows[0]) if rows else ["epoch", "loss"])
    return ["model.ckpt", "train.csv"], len(rows) == model.epochs


def cmd_eval(cfg, out):
    domain = require(cfg, "domain")
    instances = load_instances(domain, require(cfg, "input"))
    rows = []
    if cfg.get("model_path"):
        model = load_model(require(cfg, "model_path"))
        m = evaluate_policy(model, instances, cfg["mode"], cfg["budget"], np.random.default_rng(cfg["seed"]))
        rows.append({"policy": type(model).__name__, **m.as_row()})
    if domain == "tsp":
        m = evaluate_policy(tsp_greedy_policy, instances)
        rows.append({"policy": "greedy", **m.as_row()})
    if not rows:
        raise CliError("nothing to evaluate: pass --model-path")
    write_metrics_csv(os.path.join(out, "eval.csv"), rows, list(rows[0]))
    return ["eval.csv"], True


def cmd_bench_search(cfg, out):
    domain = require(cfg, "domain")
    instances = load_instances(domain, require(cfg, "input"))
    model = load_model(cfg["model_path"]) if cfg.get("model_path") else None
    table = sokoban_heuristics(model) if domain == "sokoban" else tsp_heuristics(model)
    if cfg["heuristics"]:
        unknown = set(cfg["heuristics"]) - set(table)
        if unknown:
            raise CliError(f"unknown or unavailable heuristics: {sorted(unknown)}")
        table = {k: table[k] for k in cfg["heuristics"]}
    if domain == "sokoban":
        optimal = [float(expert_solve(p, canonical=False).plan_length) for p in instances]
    else:
        optimal = [held_karp_solve(g)[1] for g in instances]
    rows, timings = benchmark_search(table, instances, cfg["algorithms"], int(cfg["budget"]), optimal)
    write_metrics_csv(os.path.join(out, "bench.csv"), rows, BENCH_FIELDS)
    write_metrics_csv(os.path.join(out, "bench_timing.csv"), timings, ["instance_id", "algorithm", "heuristic", "wall_ms"])
    for (algo, h), med in paired_medians(rows).items():
        log.info("%s/%s median nodes explored %.1f", algo, h, med)
    expected = len(instances) * len(cfg["algorithms"]) * len(table)
    return ["bench.csv", "bench_timing.csv"], len(rows) == expected


def cmd_ablate(cfg, out):
    if cfg["domain"] != "sokoban":
        raise CliError("ablations are defined for the sokoban domain")
    if cfg["grid"] not in ABLATIONS:
        raise CliError(f"unknown grid {cfg['grid']!r}; choose from {sorted(ABLATIONS)}")
    size = _size(cfg["size"])
    train = sokoban_levels(size, int(cfg["count"]), cfg["seed"], TRAIN)
    test = sokoban_levels(size, int(cfg["test_count"]), cfg["seed"], TEST)
    rows = run_sokoban_ablation(ABLATIONS[cfg["grid"]], cfg["model"], train, test, cfg["seed"])
    write_metrics_csv(os.path.join(out, "ablation.csv"), rows, list(rows[0]))
    return ["ablation.csv"], len(rows) == len(ABLATIONS[cfg["grid"]])


def cmd_leapfrog(cfg, out):
    if cfg["domain"] != "tsp":
        raise CliError("leapfrogging is defined for the tsp domain")
    plan = LeapfrogPlan(sizes=[int(s) for s in cfg["sizes"]], instances_per_size=int(cfg["count"]),
                        model_params=cfg["model"], seed=cfg["seed"], search_budget=int(cfg["budget"]),
                        eval_count=int(cfg["eval_count"]), exact_baseline=bool(cfg["exact_baseline"]),
                        out_dir=out)
    result = leapfrog_run(plan)
    write_metrics_csv(os.path.join(out, "leapfrog.csv"), result.metrics, STAGE_FIELDS)
    return ["leapfrog.csv"], len(result.metrics) == len(plan.sizes)


COMMANDS = {
    "gen-levels": cmd_gen_levels,
    "gen-graphs": cmd_gen_graphs,
    "collect": cmd_collect,
    "train": cmd_train,
    "eval": cmd_eval,
    "bench-search": cmd_bench_search,
    "ablate": cmd_ablate,
    "leapfrog": cmd_leapfrog,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="grplan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with settings; flags override it")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--domain", choices=["sokoban", "tsp"])
        p.add_argument("--size", help="grid side, HxW, or node count")
        p.add_argument("--count", type=int)
        p.add_argument("--budget", type=int, help="search node budget or rollout step budget")
        p.add_argument("--input", help="levels file or graph directory")
        p.add_argument("--model-path", dest="model_path", help="checkpoint written by train")
        p.add_argument("--dataset", help="dataset written by collect")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        os.makedirs(args.out, exist_ok=True)
        outputs, complete = COMMANDS[args.command](cfg, args.out)
        write_manifest(args.out, args.command, cfg, outputs)
    except (CliError, ValueError, OSError) as exc:
        print(f"grplan {args.command}: error: {exc}", file=sys.stderr)
        return 2
    if not complete:
        print(f"grplan {args.command}: not all requested rows were produced", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
