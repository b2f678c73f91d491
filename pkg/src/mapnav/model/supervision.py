"""Waypoint supervision: sampling, visibility, traversal labels, heatmaps.

Heatmap frame: the ego map downscaled by 2 (one heatmap cell = 0.4 m), agent
at the center cell facing up. Ground-truth heatmaps are unnormalized
Gaussians with peak exactly 1 at the waypoint cell; off-map waypoints yield
all-zero maps and a false visibility bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mapping import world_to_ego
from ..worldsim.agent import Pose
from ..worldsim.floorplan import CELL_SIZE

HEATMAP_CELL = 2.0 * CELL_SIZE


@dataclass
class PathSupervision:
    waypoints_ego: np.ndarray   # (k, 2) ego (forward, right) meters
    visibility: np.ndarray      # (k,) bool: waypoint inside heatmap bounds
    traversed: np.ndarray       # (k,) float 0/1, monotone non-increasing
    heatmaps: np.ndarray        # (k, u, v) ground-truth Gaussians
    start_heatmap: np.ndarray   # (1, u, v)


def sample_waypoints(gt_path: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """k waypoints at uniform arc length; first = start, last = goal.

    Returns (points (k,2), arc lengths (k,))."""
    pts = np.asarray(gt_path, dtype=np.float64)
    if len(pts) == 1:
        return np.repeat(pts, k, axis=0), np.zeros(k)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, s[-1], k)
    out = np.empty((k, 2))
    out[:, 0] = np.interp(targets, s, pts[:, 0])
    out[:, 1] = np.interp(targets, s, pts[:, 1])
    return out, targets


def nearest_arc_length(gt_path: np.ndarray, pose: Pose) -> float:
    """Arc length of the ground-truth path point nearest the agent."""
    pts = np.asarray(gt_path, dtype=np.float64)
    d = np.linalg.norm(pts - np.array([pose.x, pose.y]), axis=1)
    i = int(np.argmin(d))
    if len(pts) < 2:
        return 0.0
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return float(s[i])


def ego_to_heatmap_cell(f: float, r: float, u: int, v: int) -> tuple[int, int]:
    return (u // 2 - int(np.round(f / HEATMAP_CELL)),
            v // 2 + int(np.round(r / HEATMAP_CELL)))


def heatmap_cell_to_ego(row: int, col: int, u: int, v: int) -> tuple[float, float]:
    return (u // 2 - row) * HEATMAP_CELL, (col - v // 2) * HEATMAP_CELL


def make_gt_heatmaps(waypoints_ego: np.ndarray, u: int, v: int,
                     sigma: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian heatmap stack and visibility mask for ego-frame waypoints."""
    k = len(waypoints_ego)
    stack = np.zeros((k, u, v))
    vis = np.zeros(k, dtype=bool)
    rows = np.arange(u)[:, None]
    cols = np.arange(v)[None, :]
    for i, (f, r) in enumerate(waypoints_ego):
        cr, cc = ego_to_heatmap_cell(f, r, u, v)
        if not (0 <= cr < u and 0 <= cc < v):
            continue
        vis[i] = True
        stack[i] = np.exp(-((rows - cr) ** 2 + (cols - cc) ** 2) / (2.0 * sigma**2))
    return stack, vis


def make_path_supervision(gt_path: np.ndarray, pose: Pose, k: int,
                          u: int, v: int, sigma: float = 1.0) -> PathSupervision:
    world_wps, arcs = sample_waypoints(gt_path, k)
    ego = world_to_ego(pose, world_wps)
    heatmaps, vis = make_gt_heatmaps(ego, u, v, sigma)
    agent_arc = nearest_arc_length(gt_path, pose)
    traversed = (arcs <= agent_arc + 1e-9).astype(np.float64)
    start_hm, _ = make_gt_heatmaps(ego[:1], u, v, sigma)
    return PathSupervision(
        waypoints_ego=ego,
        visibility=vis,
        traversed=traversed,
        heatmaps=heatmaps,
        start_heatmap=start_hm,
    )
