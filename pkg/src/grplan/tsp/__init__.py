from .graph import (
    WeightedGraph,
    generate_chord_graph,
    generate_complete_graph,
    read_graph,
    read_tour,
    write_graph,
    write_tour,
)
from .solvers import InfeasibleError, greedy_tour, held_karp_solve, mst_heuristic, mst_weight
from .state import (
    IllegalMove,
    TspState,
    all_visited,
    encode_node_features,
    is_dead_end,
    legal_moves,
    replay_tour,
    tsp_key,
    tsp_step,
    tsp_successors,
)

__all__ = [
    "IllegalMove", "InfeasibleError", "TspState", "WeightedGraph", "all_visited",
    "encode_node_features", "generate_chord_graph", "generate_complete_graph", "greedy_tour",
    "held_karp_solve", "is_dead_end", "legal_moves", "mst_heuristic", "mst_weight", "read_graph",
    "read_tour", "replay_tour", "tsp_key", "tsp_step", "tsp_successors", "write_graph", "write_tour",
]
