"""Expert trajectories, bootstrap pair sampling and the dataset file format."""

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .sokoban.expert import expert_solve
from .sokoban.rules import SokobanProblem, apply_action, is_goal, render_observation
from .tsp.solvers import held_karp_solve
from .tsp.state import encode_node_features, replay_tour


class ExpertFailureError(RuntimeError):
    pass


class DatasetError(ValueError):
    pass


@dataclass
class Trajectory:
    """States ``s_0 .. s_g`` and the actions between them.

    ``problem`` is a SokobanProblem or a WeightedGraph; for TSP the actions
    are the visited node indices.
    """

    problem: object
    states: list
    actions: list

    def __len__(self):
        return len(self.states)

    @property
    def observations(self):
        if isinstance(self.problem, SokobanProblem):
            return [render_observation(self.problem, s) for s in self.states]
        return [encode_node_features(self.problem, s) for s in self.states]


@dataclass
class Sample:
    """One Sokoban training record."""

    current_obs: np.ndarray
    goal_obs: np.ndarray
    action_label: int
    plan_length_label: int


@dataclass
class TspSample:
    """One graph training record: 3-bit node features plus the graph."""

    features: np.ndarray
    adjacency: np.ndarray
    weights: np.ndarray
    action_label: int


@dataclass
class DatasetConfig:
    """``n_bootstrap=None`` means one pair per trajectory state (T)."""

    n_bootstrap: object = None
    sampling: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        if self.n_bootstrap is not None and self.n_bootstrap < 0:
            raise ValueError("n_bootstrap must be >= 0")
        if self.sampling not in ("uniform", "linear_increasing"):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")


def derive_seed(base_seed, index):
    """Independent per-item seed from ``(base_seed, index)``."""
    return int(np.random.SeedSequence([int(base_seed), int(index)]).generate_state(1)[0])


# Collection ------------------------------------------------------------

def sokoban_trajectory(problem, plan):
    states = [problem.initial]
    for a in plan:
        states.append(apply_action(problem, states[-1], a))
    if not is_goal(problem, states[-1]):
        raise ValueError("plan does not reach the goal")
    return Trajectory(problem, states, list(plan))


def tsp_trajectory(graph, tour):
    states = replay_tour(graph, tour)
    if not states[-1].closed:
        raise ValueError("tour is not a closed cycle")
    return Trajectory(graph, states, list(tour[1:]))


def collect_trajectories(problems, expert=None, budget=200_000, max_failure_rate=0.5):
    """Solve each Sokoban problem with ``expert`` and keep verified trajectories.

    Returns ``(trajectories, n_skipped)``. Aborts with ExpertFailureError
    when more than ``max_failure_rate`` of the instances go unsolved.
    """
    expert = expert or expert_solve
    problems = list(problems)
    trajs, skipped = [], 0
    for p in problems:
        res = expert(p, budget=budget)
        if not res.solved:
            skipped += 1
            continue
        trajs.append(sokoban_trajectory(p, res.plan))
    if problems and skipped / len(problems) > max_failure_rate:
        raise ExpertFailureError(f"expert failed on {skipped}/{len(problems)} instances")
    return trajs, skipped


def collect_tsp_trajectories(graphs, starts):
    """Held-Karp tours from the given start nodes, replay-verified."""
    out = []
    for g, s in zip(graphs, starts):
        tour, _ = held_karp_solve(g, int(s))
        out.append(tsp_trajectory(g, tour))
    return out


# Bootstrapping ------------------------------------------------------------

def sample_pairs(T, n, sampling, rng):
    """``n`` index pairs ``(i, j)`` with ``0 <= i < j < T``.

    ``uniform`` draws uniformly over all T(T-1)/2 pairs; ``linear_increasing``
    draws the goal index j with probability proportional to j, then i
    uniformly below it.
    """
    if T < 2 or n == 0:
        return []
    if sampling == "uniform":
        iu, ju = np.triu_indices(T, k=1)
        pick = rng.integers(len(iu), size=n)
        return list(zip(iu[pick].tolist(), ju[pick].tolist()))
    js = np.arange(1, T)
    j = rng.choice(js, size=n, p=js / js.sum())
    i = np.floor(rng.random(n) * j).astype(int)
    return list(zip(i.tolist(), j.tolist()))


def bootstrap_pairs(trajectory, config, rng=None):
    """Training samples for one Sokoban trajectory.

    The T-1 original samples target the real goal (no agent drawn); the
    ``n_bootstrap`` sampled pairs target the intermediate state ``s_j`` with
    the agent drawn. Plan-length labels are the remaining steps ``j - i``.
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    p, states, actions = trajectory.problem, trajectory.states, trajectory.actions
    T = len(states)
    obs = [render_observation(p, s) for s in states]
    final_goal = render_observation(p, states[-1], include_agent=False)
    samples = [Sample(obs[i], final_goal, int(actions[i]), T - 1 - i) for i in range(T - 1)]
    n_boot = T if config.n_bootstrap is None else config.n_bootstrap
    for i, j in sample_pairs(T, n_boot, config.sampling, rng):
        samples.append(Sample(obs[i], obs[j], int(actions[i]), j - i))
    return samples


def assemble_dataset(trajectories, config):
    """Bootstrap every trajectory with a per-trajectory derived seed."""
    out = []
    for k, t in enumerate(trajectories):
        out.extend(bootstrap_pairs(t, config, np.random.default_rng(derive_seed(config.seed, k))))
    return out


def tsp_samples(trajectory):
    """One sample per non-forced decision (the closing step is omitted)."""
    g = trajectory.problem
    out = []
    for s, a in zip(trajectory.states[:-1], trajectory.actions):
        if s.visited_count() == g.n:
            continue
        out.append(TspSample(encode_node_features(g, s).astype(np.int8), g.adjacency, g.weights, int(a)))
    return out


# File format -------------------------------------------------------------
#
# MAGIC, version (u32), header length (u32), JSON header, then records each
# prefixed by its byte length (u32), then crc32 (u32) of everything between
# the version field and the checksum.

MAGIC = b"GRPDATA\x00"
VERSION = 1


def _pack_sokoban(s):
    _, h, w = s.current_obs.shape
    bits = np.packbits(np.concatenate([s.current_obs.ravel(), s.goal_obs.ravel()]).astype(np.uint8))
    return struct.pack("<BBBI", h, w, s.action_label, s.plan_length_label) + bits.tobytes()


def _unpack_sokoban(rec):
    h, w, a, length = struct.unpack("<BBBI", rec[:7])
    size = 3 * h * w
    bits = np.unpackbits(np.frombuffer(rec[7:], dtype=np.uint8))[:2 * size].astype(np.float64)
    return Sample(bits[:size].reshape(3, h, w), bits[size:].reshape(3, h, w), a, length)


def _pack_tsp(s):
    n = s.features.shape[0]
    iu = np.triu_indices(n, k=1)
    bits = np.packbits(np.concatenate([s.features.ravel(), s.adjacency[iu]]).astype(np.uint8))
    return (struct.pack("<BB", n, s.action_label) + bits.tobytes()
            + np.ascontiguousarray(s.weights[iu], dtype="<f8").tobytes())


def _unpack_tsp(rec):
    n, a = struct.unpack("<BB", rec[:2])
    iu = np.triu_indices(n, k=1)
    m = len(iu[0])
    nbits = 3 * n + m
    nbytes = (nbits + 7) // 8
    bits = np.unpackbits(np.frombuffer(rec[2:2 + nbytes], dtype=np.uint8))[:nbits]
    feats = bits[:3 * n].reshape(n, 3).astype(np.int8)
    adj = np.zeros((n, n), dtype=bool)
    adj[iu] = bits[3 * n:].astype(bool)
    adj |= adj.T
    w = np.zeros((n, n))
    w[iu] = np.frombuffer(rec[2 + nbytes:], dtype="<f8")
    w += w.T
    return TspSample(feats, adj, w, a)


def write_dataset(samples, path, domain=None):
    samples = list(samples)
    if domain is None:
        domain = "tsp" if samples and isinstance(samples[0], TspSample) else "sokoban"
    pack = _pack_tsp if domain == "tsp" else _pack_sokoban
    records = [pack(s) for s in samples]
    shapes = sorted({tuple(s.features.shape if domain == "tsp" else s.current_obs.shape) for s in samples})
    header = json.dumps({"domain": domain, "count": len(records), "obs_shapes": shapes}).encode()
    body = struct.pack("<I", len(header)) + header + b"".join(struct.pack("<I", len(r)) + r for r in records)
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", VERSION) + body + struct.pack("<I", zlib.crc32(body)))


def read_dataset(path):
    """Return ``(domain, samples)``; raises DatasetError on any corruption."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 20 or blob[:8] != MAGIC:
        raise DatasetError(f"{path}: not a dataset file")
    (version,) = struct.unpack("<I", blob[8:12])
    if version != VERSION:
        raise DatasetError(f"{path}: unsupported dataset version {version}")
    body, (crc,) = blob[12:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise DatasetError(f"{path}: checksum mismatch (truncated or corrupted)")
    (hlen,) = struct.unpack("<I", body[:4])
    header = json.loads(body[4:4 + hlen])
    unpack = _unpack_tsp if header["domain"] == "tsp" else _unpack_sokoban
    samples, off = [], 4 + hlen
    for _ in range(header["count"]):
        (rlen,) = struct.unpack("<I", body[off:off + 4])
        samples.append(unpack(body[off + 4:off + 4 + rlen]))
        off += 4 + rlen
    if off != len(body):
        raise DatasetError(f"{path}: record count does not match payload")
    return header["domain"], samples
