"""Procedural Sokoban levels assembled from rotated 3x3 wall patterns.

A candidate grid is tiled with randomly chosen, randomly rotated patterns
(cropped when a side is not a multiple of 3). It is rejected when the floor
is not 4-connected or contains an open area larger than 3x4; otherwise
goals, objects and the agent are sampled on the floor and the instance is
kept only if the expert planner solves it.
"""

from collections import deque
from importlib import resources

import numpy as np

from .expert import expert_solve
from .rules import SokobanProblem, SokobanState, is_goal


class GenerationError(RuntimeError):
    """No acceptable level within the attempt budget."""


def parse_patterns(text):
    patterns, block = [], []
    for line in text.splitlines() + [""]:
        line = line.strip()
        if line.startswith("#") and set(line) - set("#."):
            continue  # comment
        if not line:
            if block:
                patterns.append(np.array([[ch == "#" for ch in row] for row in block], dtype=bool))
                block = []
            continue
        block.append(line)
    for p in patterns:
        if p.shape != (3, 3):
            raise ValueError(f"pattern of shape {p.shape}, expected 3x3")
    return patterns


def load_patterns(path=None):
    """Pattern library from ``path`` or the bundled default (17 patterns)."""
    if path is None:
        text = resources.files(__package__).joinpath("patterns.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return parse_patterns(text)


DEFAULT_PATTERNS = load_patterns()


def floor_connected(walls):
    floor = ~walls
    cells = np.argwhere(floor)
    if len(cells) == 0:
        return False
    h, w = walls.shape
    seen = np.zeros_like(floor)
    start = tuple(cells[0])
    seen[start] = True
    queue = deque([start])
    n = 1
    while queue:
        r, c = queue.popleft()
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < h and 0 <= nc < w and floor[nr, nc] and not seen[nr, nc]:
                seen[nr, nc] = True
                queue.append((nr, nc))
                n += 1
    return n == len(cells)


def _all_floor_windows(walls, rows, cols):
    h, w = walls.shape
    if h < rows or w < cols:
        return False
    s = np.zeros((h + 1, w + 1), dtype=np.int64)
    s[1:, 1:] = walls.cumsum(0).cumsum(1)
    counts = s[rows:, cols:] - s[:-rows, cols:] - s[rows:, :-cols] + s[:-rows, :-cols]
    return bool((counts == 0).any())


def has_large_open_area(walls):
    """True if some all-floor rectangle strictly contains a 3x4 or 4x3 one.

    Every such rectangle contains a 4x4, 3x5 or 5x3 all-floor window.
    """
    return any(_all_floor_windows(walls, r, c) for r, c in ((4, 4), (3, 5), (5, 3)))


def live_cells(walls, goals):
    """Cells from which a lone object can be pushed onto some goal."""
    h, w = walls.shape

    def floor(r, c):
        return 0 <= r < h and 0 <= c < w and not walls[r, c]

    live = set(goals)
    queue = deque(goals)
    while queue:
        r, c = queue.popleft()
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            src = (r - dr, c - dc)
            if src not in live and floor(*src) and floor(r - 2 * dr, c - 2 * dc):
                live.add(src)
                queue.append(src)
    return live


def tile_walls(rng, height, width, patterns):
    bh, bw = -(-height // 3), -(-width // 3)
    grid = np.zeros((bh * 3, bw * 3), dtype=bool)
    for i in range(bh):
        for j in range(bw):
            p = patterns[rng.integers(len(patterns))]
            grid[3 * i:3 * i + 3, 3 * j:3 * j + 3] = np.rot90(p, rng.integers(4))
    return grid[:height, :width]


def generate_level(dims, n_objects=1, rng_seed=0, patterns=None, max_attempts=1000,
                   solve_budget=50_000):
    """Deterministic level for ``(dims, n_objects, rng_seed)``.

    Sides that are multiples of 3 tile exactly; other sides tile and crop.
    Raises GenerationError after ``max_attempts`` rejected candidates.
    """
    height, width = dims
    if height < 3 or width < 3:
        raise ValueError(f"grid {dims} is smaller than one pattern block")
    if n_objects not in (1, 2):
        raise ValueError("n_objects must be 1 or 2")
    patterns = DEFAULT_PATTERNS if patterns is None else patterns
    rng = np.random.default_rng(rng_seed)
    for _ in range(max_attempts):
        walls = tile_walls(rng, height, width, patterns)
        floor = np.argwhere(~walls)
        if len(floor) < 2 * n_objects + 1:
            continue
        if has_large_open_area(walls) or not floor_connected(walls):
            continue
        cells = [tuple(int(v) for v in rc) for rc in floor]
        goals = frozenset(cells[i] for i in rng.choice(len(cells), n_objects, replace=False))
        picked = rng.permutation(len(cells))
        objects = frozenset(cells[i] for i in picked[:n_objects])
        agent = cells[picked[n_objects + rng.integers(len(cells) - n_objects)]]
        problem = SokobanProblem(walls, goals, SokobanState(agent, objects))
        if is_goal(problem, problem.initial):
            continue
        # cheap necessary condition before the full solve
        if not objects <= live_cells(walls, goals):
            continue
        if expert_solve(problem, budget=solve_budget, canonical=False).solved:
            return problem
    raise GenerationError(f"no acceptable {height}x{width} level after {max_attempts} attempts")


def check_level(problem):
    """Generator contract: connected floor, no open area above 3x4, valid placement."""
    problem.validate()
    return floor_connected(problem.walls) and not has_large_open_area(problem.walls)
