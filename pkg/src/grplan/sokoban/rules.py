"""Sokoban rules, observations and the text level format.

Cells are ``(row, col)`` tuples. Anything outside the grid counts as wall.
"""

from dataclasses import dataclass
from typing import FrozenSet, NamedTuple, Tuple

import numpy as np

Cell = Tuple[int, int]

ACTIONS = ("Up", "Down", "Left", "Right")
UP, DOWN, LEFT, RIGHT = range(4)
DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1))

WALL_CH, AGENT_CH, OBJECT_CH = 0, 1, 2


class SokobanState(NamedTuple):
    agent: Cell
    objects: FrozenSet[Cell]

    def key(self):
        return (self.agent, tuple(sorted(self.objects)))


@dataclass(frozen=True, eq=False)
class SokobanProblem:
    walls: np.ndarray
    goals: FrozenSet[Cell]
    initial: SokobanState

    def __post_init__(self):
        walls = np.array(self.walls, dtype=bool)
        walls.setflags(write=False)
        object.__setattr__(self, "walls", walls)
        object.__setattr__(self, "goals", frozenset(map(tuple, self.goals)))
        init = SokobanState(tuple(self.initial.agent), frozenset(map(tuple, self.initial.objects)))
        object.__setattr__(self, "initial", init)
        object.__setattr__(self, "_open", frozenset(map(tuple, np.argwhere(~walls).tolist())))

    @property
    def height(self):
        return self.walls.shape[0]

    @property
    def width(self):
        return self.walls.shape[1]

    def is_wall(self, cell):
        return cell not in self._open

    def floor_cells(self):
        return [tuple(int(v) for v in rc) for rc in np.argwhere(~self.walls)]

    def validate(self, state=None):
        """Raise ValueError if the problem (or ``state``) breaks an invariant."""
        state = self.initial if state is None else state
        for g in self.goals:
            if self.is_wall(g):
                raise ValueError(f"goal {g} on a wall")
        if len(self.goals) != len(self.initial.objects):
            raise ValueError("number of goals differs from number of objects")
        if self.is_wall(state.agent):
            raise ValueError(f"agent {state.agent} on a wall")
        if state.agent in state.objects:
            raise ValueError("agent shares a cell with an object")
        for o in state.objects:
            if self.is_wall(o):
                raise ValueError(f"object {o} on a wall")

    def __eq__(self, other):
        return (isinstance(other, SokobanProblem) and np.array_equal(self.walls, other.walls)
                and self.goals == other.goals and self.initial == other.initial)

    def __hash__(self):
        return hash((self.walls.tobytes(), self.walls.shape, self.goals, self.initial))


def apply_action(problem, state, action):
    """Move the agent one cell, pushing an object if the cell beyond is free.

    Blocked moves return ``state`` itself.
    """
    dr, dc = DELTAS[action]
    r, c = state.agent
    nxt = (r + dr, c + dc)
    floor = problem._open
    if nxt not in floor:
        return state
    if nxt in state.objects:
        beyond = (r + 2 * dr, c + 2 * dc)
        if beyond not in floor or beyond in state.objects:
            return state
        return SokobanState(nxt, (state.objects - {nxt}) | {beyond})
    return SokobanState(nxt, state.objects)


def legal_actions(problem, state):
    """Actions that change the state."""
    return [a for a in range(4) if apply_action(problem, state, a) is not state]


def successors(problem):
    """Successor function for the generic search routines (unit costs)."""

    def succ(state):
        for a in range(4):
            nxt = apply_action(problem, state, a)
            if nxt is not state:
                yield a, nxt, 1.0

    return succ


def is_goal(problem, state):
    return state.objects == problem.goals


def render_observation(problem, state, include_agent=True):
    """(3, H, W) binary image: walls, agent, objects."""
    obs = np.zeros((3, problem.height, problem.width))
    obs[WALL_CH] = problem.walls
    if include_agent:
        obs[AGENT_CH][state.agent] = 1.0
    for o in state.objects:
        obs[OBJECT_CH][o] = 1.0
    return obs


def goal_observation(problem, agent=None):
    """Observation of the objects placed on the goals; agent drawn only if given."""
    obs = np.zeros((3, problem.height, problem.width))
    obs[WALL_CH] = problem.walls
    if agent is not None:
        obs[AGENT_CH][agent] = 1.0
    for g in problem.goals:
        obs[OBJECT_CH][g] = 1.0
    return obs


def agent_position(obs):
    """Agent cell read from the agent channel, or None if absent."""
    hits = np.argwhere(obs[AGENT_CH] > 0.5)
    if len(hits) == 0:
        return None
    return tuple(int(v) for v in hits[0])


def decode_observation(obs):
    """Inverse of :func:`render_observation`: ``(walls, SokobanState)``."""
    walls = obs[WALL_CH] > 0.5
    objects = frozenset(tuple(int(v) for v in rc) for rc in np.argwhere(obs[OBJECT_CH] > 0.5))
    return walls, SokobanState(agent_position(obs), objects)


# Text format --------------------------------------------------------------

def parse_level(text):
    """Parse one level in the usual ``#.@$X*+`` notation.

    Spaces are treated as floor; ragged rows are padded with wall.
    """
    rows = [line.rstrip("\n") for line in text.splitlines() if line.strip()]
    if not rows:
        raise ValueError("empty level")
    h, w = len(rows), max(len(r) for r in rows)
    walls = np.ones((h, w), dtype=bool)
    goals, objects, agent = set(), set(), None
    for r, line in enumerate(rows):
        for c, ch in enumerate(line):
            if ch == "#":
                continue
            if ch not in ".@$X*+ ":
                raise ValueError(f"unknown level character {ch!r} at ({r}, {c})")
            walls[r, c] = False
            if ch in "X*+":
                goals.add((r, c))
            if ch in "$*":
                objects.add((r, c))
            if ch in "@+":
                if agent is not None:
                    raise ValueError("level has more than one agent")
                agent = (r, c)
    if agent is None:
        raise ValueError("level has no agent")
    problem = SokobanProblem(walls, frozenset(goals), SokobanState(agent, frozenset(objects)))
    problem.validate()
    return problem


def format_level(problem, state=None):
    state = problem.initial if state is None else state
    lines = []
    for r in range(problem.height):
        row = []
        for c in range(problem.width):
            cell = (r, c)
            if problem.walls[r, c]:
                row.append("#")
            elif cell == state.agent:
                row.append("+" if cell in problem.goals else "@")
            elif cell in state.objects:
                row.append("*" if cell in problem.goals else "$")
            elif cell in problem.goals:
                row.append("X")
            else:
                row.append(".")
        lines.append("".join(row))
    return "\n".join(lines)


def load_levels(path):
    with open(path) as fh:
        blocks = fh.read().split("\n\n")
    return [parse_level(b) for b in blocks if b.strip()]


def save_levels(path, problems):
    with open(path, "w") as fh:
        fh.write("\n\n".join(format_level(p) for p in problems) + "\n")
