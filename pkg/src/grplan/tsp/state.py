"""Partial-tour states, legal steps and node features."""

from typing import NamedTuple

import numpy as np


class IllegalMove(ValueError):
    def __init__(self, reason, node):
        super().__init__(f"illegal move to node {node}: {reason}")
        self.reason = reason
        self.node = node


class TspState(NamedTuple):
    """``visited`` is a bitmask over node indices; ``closed`` marks a finished cycle."""

    visited: int
    current: int
    start: int
    closed: bool = False

    @classmethod
    def initial(cls, start):
        return cls(1 << start, start, start)

    def visited_nodes(self, n):
        return [i for i in range(n) if self.visited >> i & 1]

    def visited_count(self):
        return bin(self.visited).count("1")

    def key(self):
        return (self.visited, self.current, self.closed)


def all_visited(graph, state):
    return state.visited == (1 << graph.n) - 1


def legal_moves(graph, state):
    """Unvisited neighbours of the current node, or the start once all are visited."""
    if state.closed:
        return []
    adj = graph.adjacency[state.current]
    if all_visited(graph, state):
        return [state.start] if adj[state.start] else []
    return [v for v in range(graph.n) if adj[v] and not state.visited >> v & 1]


def tsp_step(graph, state, nxt):
    """Move to ``nxt``; raises IllegalMove with reason ``no-edge`` or ``revisit``."""
    if state.closed:
        raise IllegalMove("revisit", nxt)
    if not graph.adjacency[state.current, nxt]:
        raise IllegalMove("no-edge", nxt)
    if state.visited >> nxt & 1:
        if nxt == state.start and all_visited(graph, state):
            return TspState(state.visited, nxt, state.start, True)
        raise IllegalMove("revisit", nxt)
    return TspState(state.visited | (1 << nxt), nxt, state.start)


def is_dead_end(graph, state):
    return not state.closed and not legal_moves(graph, state)


def replay_tour(graph, tour):
    """States visited by a closed tour ``[s, ..., s]``; raises IllegalMove on error."""
    states = [TspState.initial(tour[0])]
    for v in tour[1:]:
        states.append(tsp_step(graph, states[-1], v))
    return states


def tsp_successors(graph):
    def succ(state):
        for v in legal_moves(graph, state):
            yield v, tsp_step(graph, state, v), float(graph.weights[state.current, v])

    return succ


def tsp_key(state):
    return state.key()


def encode_node_features(graph, state, width=3):
    """Per-node ``(visited, is_current, is_terminal)`` bits.

    ``width=6`` appends three edge-derived columns: the weight of the edge
    from the current node, the cheapest edge from the node to another
    unvisited node (the edge back to the start when there is none), and a
    legal-next-move flag. The sum aggregation of a graph convolution cannot
    single out one incident edge, so these carry that information directly.
    """
    n = graph.n
    feats = np.zeros((n, width))
    visited = np.array([state.visited >> i & 1 for i in range(n)], dtype=bool)
    feats[:, 0] = visited
    feats[state.current, 1] = 1.0
    feats[state.start, 2] = 1.0
    if width == 3:
        return feats
    if width != 6:
        raise ValueError(f"feature width must be 3 or 6, got {width}")
    w = graph.weights
    feats[:, 3] = w[state.current]
    onward = graph.adjacency & ~visited[None, :] & ~np.eye(n, dtype=bool)
    feats[:, 4] = np.where(onward.any(axis=1), np.where(onward, w, np.inf).min(axis=1), w[:, state.start])
    feats[legal_moves(graph, state), 5] = 1.0
    return feats
