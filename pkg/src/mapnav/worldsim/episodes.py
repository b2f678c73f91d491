"""Episodes: shortest paths, start/goal sampling, dataset serialization."""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import GenerationError, NoPathError
from .agent import Pose
from .floorplan import CELL_SIZE, Floorplan, cell_center, pos_to_cell

SQRT2 = float(np.sqrt(2.0))
PATH_SPACING = 0.2

_NEIGHBORS = [
    (-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0),
    (-1, -1, SQRT2), (-1, 1, SQRT2), (1, -1, SQRT2), (1, 1, SQRT2),
]


@dataclass
class Episode:
    episode_id: int
    floorplan_seed: int
    start: Pose
    goal: tuple[float, float]
    gt_path: np.ndarray  # (n, 2) world-frame points, <=0.2 m apart
    instruction_text: str = ""
    tokens: list[int] = field(default_factory=list)

    @property
    def path_length(self) -> float:
        return polyline_length(self.gt_path)


def polyline_length(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())


def resample_polyline(points: np.ndarray, spacing: float = PATH_SPACING) -> np.ndarray:
    """Resample at uniform arc length <= spacing, keeping exact endpoints."""
    points = np.asarray(points, dtype=np.float64)
    if len(points) < 2:
        return points.copy()
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    total = seg.sum()
    if total < 1e-12:
        return points[:1].copy()
    n = max(1, int(np.ceil(total / spacing)))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, total, n + 1)
    out = np.empty((n + 1, 2))
    out[:, 0] = np.interp(targets, s, points[:, 0])
    out[:, 1] = np.interp(targets, s, points[:, 1])
    return out


def astar_cells(traversable: np.ndarray, start: tuple[int, int],
                goal: tuple[int, int]) -> list[tuple[int, int]]:
    """A* over 8-connected cells, diagonal cost sqrt(2), no corner cutting."""
    if not traversable[start] or not traversable[goal]:
        raise NoPathError(f"endpoint not traversable: {start} -> {goal}")

    def h(cell):
        dr = abs(cell[0] - goal[0])
        dc = abs(cell[1] - goal[1])
        return (dr + dc) + (SQRT2 - 2.0) * min(dr, dc)

    g_cost = {start: 0.0}
    came: dict = {}
    heap = [(h(start), start)]
    closed = set()
    rows, cols = traversable.shape
    while heap:
        _, cur = heapq.heappop(heap)
        if cur == goal:
            path = [cur]
            while cur in came:
                cur = came[cur]
                path.append(cur)
            return path[::-1]
        if cur in closed:
            continue
        closed.add(cur)
        r, c = cur
        for dr, dc, cost in _NEIGHBORS:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < rows and 0 <= nc < cols) or not traversable[nr, nc]:
                continue
            if dr and dc and not (traversable[r, nc] and traversable[nr, c]):
                continue  # no squeezing through diagonal gaps
            ng = g_cost[cur] + cost
            nxt = (nr, nc)
            if ng < g_cost.get(nxt, np.inf):
                g_cost[nxt] = ng
                came[nxt] = cur
                heapq.heappush(heap, (ng + h(nxt), nxt))
    raise NoPathError(f"no path from {start} to {goal}")


def shortest_path(plan: Floorplan, a: tuple[float, float],
                  b: tuple[float, float]) -> tuple[np.ndarray, float]:
    """Geodesic polyline (resampled at 0.2 m) and its length in meters."""
    ca, cb = pos_to_cell(*a), pos_to_cell(*b)
    if ca == cb:
        if np.allclose(a, b):
            path = np.array([a])
        else:
            path = resample_polyline(np.array([a, b]))
        return path, polyline_length(path)
    cells = astar_cells(plan.traversable_mask(), ca, cb)
    pts = [np.asarray(a, dtype=np.float64)]
    for cell in cells[1:-1]:
        pts.append(np.array(cell_center(*cell)))
    pts.append(np.asarray(b, dtype=np.float64))
    path = resample_polyline(np.array(pts))
    return path, polyline_length(path)


def generate_episode(plan: Floorplan, seed: int, episode_id: int = 0,
                     min_geodesic: float = 3.0, max_geodesic: float = 9.0,
                     with_instruction: bool = True) -> Episode:
    """Sample a start pose and goal with geodesic distance in range, build
    the ground-truth path, and attach a generated instruction."""
    rng = np.random.default_rng(np.random.PCG64(hash((plan.seed, seed, 0x9E3779B9)) & 0x7FFFFFFF))
    floor_cells = np.argwhere(plan.traversable_mask())
    for _ in range(100):
        i, j = rng.integers(0, len(floor_cells), size=2)
        sr, sc = floor_cells[i]
        gr, gc = floor_cells[j]
        start_xy = cell_center(sr, sc)
        goal_xy = cell_center(gr, gc)
        eu = float(np.hypot(goal_xy[0] - start_xy[0], goal_xy[1] - start_xy[1]))
        if eu > max_geodesic:
            continue
        try:
            path, length = shortest_path(plan, start_xy, goal_xy)
        except NoPathError:
            continue
        if not (min_geodesic <= length <= max_geodesic):
            continue
        theta = float(rng.uniform(-np.pi, np.pi))
        ep = Episode(
            episode_id=episode_id,
            floorplan_seed=plan.seed,
            start=Pose(start_xy[0], start_xy[1], theta),
            goal=(goal_xy[0], goal_xy[1]),
            gt_path=path,
        )
        if with_instruction:
            from ..language import grammar, tokenizer

            ep.instruction_text = grammar.generate_instruction(ep, plan, seed)
            ep.tokens = tokenizer.tokenize(ep.instruction_text).tokens
        return ep
    raise GenerationError(f"episode sampling failed (plan seed {plan.seed}, seed {seed})")


def episode_to_json(ep: Episode) -> str:
    return json.dumps({
        "id": ep.episode_id,
        "floorplan_seed": ep.floorplan_seed,
        "start": {"x": ep.start.x, "y": ep.start.y, "theta": ep.start.theta},
        "goal": {"x": ep.goal[0], "y": ep.goal[1]},
        "path": [[float(x), float(y)] for x, y in ep.gt_path],
        "instruction_text": ep.instruction_text,
        "tokens": list(map(int, ep.tokens)),
    })


def episode_from_json(line: str) -> Episode:
    d = json.loads(line)
    return Episode(
        episode_id=d["id"],
        floorplan_seed=d["floorplan_seed"],
        start=Pose(d["start"]["x"], d["start"]["y"], d["start"]["theta"]),
        goal=(d["goal"]["x"], d["goal"]["y"]),
        gt_path=np.array(d["path"], dtype=np.float64),
        instruction_text=d["instruction_text"],
        tokens=list(d["tokens"]),
    )


def save_episodes(path, episodes):
    with open(path, "w") as f:
        for ep in episodes:
            f.write(episode_to_json(ep) + "\n")


def load_episodes(path) -> list[Episode]:
    with open(path) as f:
        return [episode_from_json(line) for line in f if line.strip()]
