"""Graph-convolution policy for tours on weighted graphs."""

import numpy as np
from sklearn.utils.validation import check_is_fitted

from ..autodiff import Tensor, graph_conv, kaiming_uniform, reshape, softmax, softmax_cross_entropy
from ..tsp.state import TspState, encode_node_features, legal_moves
from .base import GrpEstimator


class DeadEndError(RuntimeError):
    """The current node has no legal successor."""


class _GraphView:
    """Just enough of WeightedGraph for feature encoding, without re-validation."""

    def __init__(self, adjacency, weights):
        self.adjacency = adjacency
        self.weights = weights
        self.n = adjacency.shape[0]


class GraphGRP(GrpEstimator):
    """Stack of graph convolutions scoring every node as the next move.

    ``layers`` ReLU graph convolutions of ``width`` channels are followed by a
    linear width-1 graph convolution whose per-node outputs are the logits.
    Parameter shapes depend only on the hyper-parameters, so one model runs on
    any node count. ``include_self`` adds a zero-weight self loop to every
    node's neighbourhood.
    """

    _schedule_kind = "exponential"

    def __init__(self, layers=4, width=26, feature_width=6, include_self=False, epochs=60,
                 batch_size=32, lr=1e-3, lr_rate=0.95, clip_norm=10.0, init="kaiming",
                 random_state=0, verbose=0):
        self.layers = layers
        self.width = width
        self.feature_width = feature_width
        self.include_self = include_self
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_rate = lr_rate
        self.clip_norm = clip_norm
        self.init = init
        self.random_state = random_state
        self.verbose = verbose

    def _make_params(self, rng):
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.feature_width not in (3, 6):
            raise ValueError("feature_width must be 3 or 6")
        zeros = self.init == "zeros"
        p = {}
        c = self.feature_width
        for layer, c_out in enumerate([self.width] * self.layers + [1]):
            name = "score" if layer == self.layers else f"gconv{layer}"
            shape = (2 * c + 1, c_out)
            p[f"{name}.theta"] = np.zeros(shape) if zeros else kaiming_uniform(rng, shape, 2 * c + 1)
            p[f"{name}.bias"] = np.zeros(c_out)
            c = c_out
        return p

    def _graph_arrays(self, adjacency, weights):
        adj = np.asarray(adjacency, dtype=float)
        if self.include_self:
            adj = adj + np.eye(adj.shape[-1])
        return adj, np.asarray(weights, dtype=float)

    def _forward(self, feats, adjacency, weights):
        """(B, n) logit Tensor for (B, n, C) features."""
        p = self.params_
        adj, w = self._graph_arrays(adjacency, weights)
        h = Tensor(feats)
        for layer in range(self.layers):
            h = graph_conv(h, adj, w, p[f"gconv{layer}.theta"], p[f"gconv{layer}.bias"])
        out = graph_conv(h, adj, w, p["score.theta"], p["score.bias"], activation=False)
        return reshape(out, out.shape[:2])

    def _features(self, s):
        # Stored samples carry the three binary bits; any wider encoding is
        # rebuilt from the graph.
        f = np.asarray(s.features)
        if self.feature_width == f.shape[1]:
            return f.astype(float)
        visited = int(sum(1 << i for i in np.flatnonzero(f[:, 0])))
        state = TspState(visited, int(np.argmax(f[:, 1])), int(np.argmax(f[:, 2])))
        return encode_node_features(_GraphView(s.adjacency, s.weights), state, self.feature_width)

    def _prepare(self, samples):
        groups = {}
        for i, s in enumerate(samples):
            groups.setdefault(s.features.shape[0], []).append(i)
        data = {}
        for n, idx in groups.items():
            data[n] = {
                "n": len(idx),
                "x": np.stack([self._features(samples[i]) for i in idx]),
                "adj": np.stack([samples[i].adjacency for i in idx]),
                "w": np.stack([samples[i].weights for i in idx]),
                "actions": np.array([samples[i].action_label for i in idx]),
            }
        return data

    def _batch_loss(self, group, idx):
        logits = self._forward(group["x"][idx], group["adj"][idx], group["w"][idx])
        ce, probs = softmax_cross_entropy(logits, group["actions"][idx])
        acc = float(np.mean(probs.argmax(axis=1) == group["actions"][idx]))
        return ce, {"accuracy": acc}

    # Inference -------------------------------------------------------------

    def node_logits(self, graph, states):
        """(len(states), n) logits for a list of states on one graph."""
        check_is_fitted(self, "params_")
        feats = np.stack([encode_node_features(graph, s, self.feature_width) for s in states])
        k = len(states)
        adj = np.broadcast_to(graph.adjacency, (k,) + graph.adjacency.shape)
        w = np.broadcast_to(graph.weights, (k,) + graph.weights.shape)
        return self._forward(feats, adj, w).data

    def score(self, samples, y=None):
        """Fraction of samples whose expert node gets the highest score."""
        data = self._prepare(list(samples))
        hits = total = 0
        for g in data.values():
            logits = self._forward(g["x"], g["adj"], g["w"]).data
            hits += int(np.sum(logits.argmax(axis=1) == g["actions"]))
            total += g["n"]
        return hits / total


def legal_node_mask(graph, state):
    mask = np.zeros(graph.n, dtype=bool)
    mask[legal_moves(graph, state)] = True
    return mask


def tsp_forward(model, graph, state):
    """Per-node scores and the probability over legal next nodes.

    Raises DeadEndError when no move is legal.
    """
    logits = model.node_logits(graph, [state])[0]
    mask = legal_node_mask(graph, state)
    if not mask.any():
        raise DeadEndError(f"no legal move from node {state.current}")
    return logits, softmax(logits, mask)


def select_action(model, graph, state, mode="deterministic", rng=None):
    """Highest-scoring legal node (lowest index on ties), or a masked sample."""
    logits, probs = tsp_forward(model, graph, state)
    if mode == "deterministic":
        return int(np.argmax(np.where(probs > 0, logits, -np.inf)))
    if mode == "stochastic":
        rng = rng if rng is not None else np.random.default_rng()
        return int(rng.choice(graph.n, p=probs))
    raise ValueError(f"unknown mode {mode!r}")


def heuristic_tsp(model, graph, state, node, probs=None):
    """``(N - v)(1 - p_node) / 2`` for the child reached by moving to ``node``.

    ``v`` is the visited count of ``state`` (the parent).
    """
    if probs is None:
        probs = tsp_forward(model, graph, state)[1]
    return (graph.n - state.visited_count()) * (1.0 - float(probs[node])) / 2.0


class TspHeuristic:
    """Batch heuristic for :mod:`grplan.search`: one forward pass per expansion."""

    def __init__(self, model, graph):
        self.model = model
        self.graph = graph

    def __call__(self, parent, children):
        if parent is None:
            return [0.0 for _ in children]
        _, probs = tsp_forward(self.model, self.graph, parent)
        return [heuristic_tsp(self.model, self.graph, parent, c.current, probs) for c in children]
