from .expert import expert_solve, manhattan_heuristic
from .generator import (
    DEFAULT_PATTERNS,
    GenerationError,
    check_level,
    floor_connected,
    generate_level,
    has_large_open_area,
    load_patterns,
)
from .rules import (
    ACTIONS,
    DELTAS,
    SokobanProblem,
    SokobanState,
    agent_position,
    apply_action,
    decode_observation,
    format_level,
    goal_observation,
    is_goal,
    legal_actions,
    load_levels,
    parse_level,
    render_observation,
    save_levels,
    successors,
)

__all__ = [
    "ACTIONS", "DEFAULT_PATTERNS", "DELTAS", "GenerationError", "SokobanProblem", "SokobanState",
    "agent_position", "apply_action", "check_level", "decode_observation", "expert_solve",
    "floor_connected", "format_level", "generate_level", "goal_observation", "has_large_open_area",
    "is_goal", "legal_actions", "load_levels", "load_patterns", "manhattan_heuristic", "parse_level",
    "render_observation", "save_levels", "successors",
]
