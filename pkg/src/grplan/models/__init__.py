from ..autodiff import load_checkpoint
from .base import GrpEstimator, TrainingDivergedError, minibatches
from .graph_grp import DeadEndError, GraphGRP, TspHeuristic, heuristic_tsp, tsp_forward
from .graph_grp import select_action as select_node
from .sokoban_grp import SokobanGRP, SokobanHeuristic, heuristic_sokoban, select_action, sokoban_forward

ESTIMATORS = {cls.__name__: cls for cls in (SokobanGRP, GraphGRP)}


def load_model(path):
    """Load a checkpoint written by either estimator."""
    _, meta = load_checkpoint(path)
    cls = ESTIMATORS.get(meta.get("class"))
    if cls is None:
        raise ValueError(f"{path}: unknown model class {meta.get('class')!r}")
    return cls.load(path)


__all__ = [
    "DeadEndError", "ESTIMATORS", "GraphGRP", "GrpEstimator", "SokobanGRP", "SokobanHeuristic",
    "TrainingDivergedError", "TspHeuristic", "heuristic_sokoban", "heuristic_tsp", "load_model",
    "minibatches", "select_action", "select_node", "sokoban_forward", "tsp_forward",
]
