"""Seeded instance sets, datasets and ablation grids shared by the CLI and tests."""

import hashlib
import json
import logging
import os
import pickle
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    DatasetConfig,
    assemble_dataset,
    collect_trajectories,
    collect_tsp_trajectories,
    derive_seed,
    tsp_samples,
)
from .evaluation import evaluate_policy
from .models import GraphGRP, SokobanGRP
from .sokoban.generator import generate_level
from .sokoban.rules import format_level
from .tsp.graph import generate_chord_graph, generate_complete_graph

log = logging.getLogger(__name__)

# Salts keep train / test / eval streams of one seed disjoint.
TRAIN, TEST = 1, 2

ABLATIONS = {
    "depth": {
        "2-layer": {"depth": 2, "skip": True},
        "8-layer": {"depth": 8, "skip": True},
        "14-layer": {"depth": 14, "skip": True},
    },
    "deep-vs-shallow": {
        "8x64": {"depth": 8, "filters": 64},
        "2x256": {"depth": 2, "filters": 256},
        "1x512": {"depth": 1, "filters": 512},
    },
    "bootstrap": {
        "bootstrap": {"_n_bootstrap": None},
        "no-bootstrap": {"_n_bootstrap": 0},
    },
    "shared-head": {
        "joint+bootstrap": {"lambda_len": 1.0, "_n_bootstrap": None},
        "action+bootstrap": {"lambda_len": 0.0, "_n_bootstrap": None},
        "joint": {"lambda_len": 1.0, "_n_bootstrap": 0},
        "action": {"lambda_len": 0.0, "_n_bootstrap": 0},
    },
}


def sokoban_levels(size, count, seed, salt=TRAIN, n_objects=1):
    """``count`` levels of ``size`` (int or (H, W)); level k depends only on (seed, salt, k)."""
    dims = (size, size) if isinstance(size, int) else tuple(size)
    return [generate_level(dims, n_objects, derive_seed(seed * 10 + salt, k)) for k in range(count)]


def tsp_graphs(n, count, seed, salt=TRAIN, kind="complete"):
    gen = generate_complete_graph if kind == "complete" else generate_chord_graph
    return [gen(n, derive_seed(seed * 10 + salt, k)) for k in range(count)]


def sokoban_samples(levels, n_bootstrap=None, sampling="uniform", seed=0):
    trajs, skipped = collect_trajectories(levels)
    if skipped:
        log.warning("expert skipped %d of %d levels", skipped, len(levels))
    return assemble_dataset(trajs, DatasetConfig(n_bootstrap, sampling, seed))


def tsp_training_samples(graphs, seed=0):
    starts = np.random.default_rng(seed).integers(0, graphs[0].n, size=len(graphs))
    return [s for t in collect_tsp_trajectories(graphs, starts) for s in tsp_samples(t)]


def source_digest():
    """Hash of the package sources, so cached results and manifests track code changes."""
    root = Path(__file__).parent
    h = hashlib.sha256(__version__.encode())
    for p in sorted(root.rglob("*")):
        if p.suffix in (".py", ".txt") and "__pycache__" not in p.parts:
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()[:16]


def config_hash(config):
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


class ResultCache:
    """Pickle store keyed by a config dict plus the source digest.

    ``cache_dir=None`` disables caching.
    """

    def __init__(self, cache_dir):
        self.dir = None if cache_dir is None else Path(cache_dir)
        self._digest = source_digest()

    def get_or_compute(self, config, compute):
        if self.dir is None:
            return compute()
        path = self.dir / f"{config_hash({**config, '_src': self._digest})}.pkl"
        if path.exists():
            with open(path, "rb") as fh:
                return pickle.load(fh)
        value = compute()
        self.dir.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".tmp{os.getpid()}")
        with open(tmp, "wb") as fh:
            pickle.dump(value, fh)
        os.replace(tmp, path)
        return value


def split_config(params):
    """Separate dataset options (leading underscore) from estimator hyper-parameters."""
    data = {k[1:]: v for k, v in params.items() if k.startswith("_")}
    model = {k: v for k, v in params.items() if not k.startswith("_")}
    return data, model


def run_sokoban_ablation(grid, base_params, train_levels, test_levels, seed=0, cache=None):
    """Train every grid entry on the same levels; rows of (config, success, n_parameters)."""
    cache = cache or ResultCache(None)
    rows = []
    for name, override in grid.items():
        data_opts, model_opts = split_config({**base_params, **override})
        params = {**model_opts, "random_state": seed}
        key = {"kind": "sokoban-ablation", "params": params, "data": data_opts,
               "train": [hash_level(p) for p in train_levels], "test": [hash_level(p) for p in test_levels]}

        def compute():
            samples = sokoban_samples(train_levels, data_opts.get("n_bootstrap"),
                                      data_opts.get("sampling", "uniform"), seed)
            model = SokobanGRP(**params).fit(samples)
            m = evaluate_policy(model, test_levels)
            return {"config": name, "success_rate": m.success_rate,
                    "n_parameters": model.n_parameters_, "n_samples": len(samples),
                    "final_loss": model.loss_curve_[-1] if model.loss_curve_ else float("nan")}

        # the cache key ignores the entry name, so grids that share a config share a row
        rows.append({**cache.get_or_compute(key, compute), "config": name})
        log.info("ablation %s: %s", name, rows[-1])
    return rows


def hash_level(problem):
    return hashlib.sha256(format_level(problem).encode()).hexdigest()[:12]


def train_graph_model(graphs, params=None, seed=0):
    return GraphGRP(**{**(params or {}), "random_state": seed}).fit(tsp_training_samples(graphs, seed))
