"""Image export: PGM/PPM writers, class colors, and rollout visualization.

Per-timestep exports show the ego semantic map with predicted waypoints
(red), the agent (green), and the goal (orange), plus the pooled
instruction-attended feature grid and per-token attention maps.
"""
from __future__ import annotations

import json
import os

import numpy as np

from .errors import UsageError
from .language.vocab import PAD_ID, WORDS
from .mapping import ego_to_cell, new_global_occupancy, world_to_ego

# fixed class -> RGB color table, indexed by class id
CLASS_COLORS = np.array([
    (40, 40, 40),     # void
    (220, 220, 220),  # floor
    (70, 70, 90),     # wall
    (160, 110, 60),   # table
    (200, 160, 60),   # chair
    (120, 80, 160),   # bed
    (60, 140, 160),   # sofa
    (100, 180, 220),  # sink
    (230, 230, 250),  # toilet
    (180, 140, 100),  # counter
    (30, 30, 120),    # tv
    (60, 160, 60),    # plant
    (140, 100, 40),   # cabinet
], dtype=np.uint8)

RED = (230, 40, 40)
GREEN = (40, 200, 40)
ORANGE = (240, 150, 30)


def write_pgm(path, gray: np.ndarray):
    """8-bit binary PGM."""
    g = np.asarray(gray)
    if g.dtype != np.uint8:
        lo, hi = float(g.min()), float(g.max())
        scale = 255.0 / (hi - lo) if hi > lo else 0.0
        g = ((g - lo) * scale).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{g.shape[1]} {g.shape[0]}\n255\n".encode())
        fh.write(g.tobytes())


def write_ppm(path, rgb: np.ndarray):
    """24-bit binary PPM; input (h, w, 3) uint8."""
    img = np.asarray(rgb, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise UsageError(f"write_ppm expects (h,w,3), got {img.shape}")
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


def semantic_image(labels: np.ndarray) -> np.ndarray:
    """(h,w) class labels -> (h,w,3) colored image."""
    return CLASS_COLORS[np.asarray(labels, dtype=int) % len(CLASS_COLORS)]


def _paint(img: np.ndarray, row: int, col: int, color, radius: int = 1):
    h, w = img.shape[:2]
    r0, r1 = max(0, row - radius), min(h, row + radius + 1)
    c0, c1 = max(0, col - radius), min(w, col + radius + 1)
    if r0 < r1 and c0 < c1:
        img[r0:r1, c0:c1] = color


def rollout_frame(plan, pose, goal_xy, sem_labels: np.ndarray,
                  decoded_waypoints) -> np.ndarray:
    """Ego-frame semantic view with waypoint/agent/goal overlays."""
    size = sem_labels.shape[0]
    img = semantic_image(sem_labels).copy()
    for p in decoded_waypoints:
        if p is None:
            continue
        r, c = ego_to_cell(p[0], p[1], size)
        _paint(img, r, c, RED)
    gr, gc = ego_to_cell(*world_to_ego(pose, np.array([goal_xy]))[0], size)
    _paint(img, gr, gc, ORANGE)
    _paint(img, size // 2, size // 2, GREEN)
    return img


def attention_images(attn: np.ndarray, tokens, grid: int) -> list[tuple[str, np.ndarray]]:
    """Per-token attention maps: (token word, (grid,grid) float map)."""
    out = []
    a = np.asarray(attn)   # (N, M): map tokens x instruction tokens
    for j, tok in enumerate(tokens):
        if tok == PAD_ID:
            break
        word = WORDS[tok] if 0 <= tok < len(WORDS) else "?"
        out.append((f"{j:02d}-{word}", a[:, j].reshape(grid, grid)))
    return out


def export_rollout(trace_path, model, config, plan, episode, out_dir):
    """Replay a rollout trace and write per-step PPM/PGM image sets."""
    from . import numerics as nm
    from .controller import decode_waypoints
    from .mapping import crop_ego_occupancy, ground_project, update_global
    from .worldsim.agent import Pose, raycast

    os.makedirs(out_dir, exist_ok=True)
    with open(trace_path) as fh:
        steps = [json.loads(line) for line in fh if line.strip()]
    instr = [model.encode_instruction(np.asarray(episode.tokens))]
    c = model.config
    gmap = new_global_occupancy(plan.grid.shape[0])
    for row in steps:
        t = row["t"]
        pose = Pose(*row["pose"])
        scan = raycast(plan, pose, num_rays=config.num_rays,
                       max_range=config.max_range)
        occ_frame, sem_frame = ground_project(scan, c.ego_size)
        update_global(gmap, occ_frame, pose)
        with nm.no_grad():
            occ_in = crop_ego_occupancy(gmap, pose, c.ego_size)[None]
            _, sem_hat, _, _ = model.predict_maps(occ_in, sem_frame[None], instr)
            from .model.supervision import make_gt_heatmaps
            start_ego = world_to_ego(pose, np.array([[episode.start.x, episode.start.y]]))
            p0, _ = make_gt_heatmaps(start_ego, c.heatmap_size, c.heatmap_size, c.sigma)
            heat, _, h_grid, attns = model.predict_path(sem_hat, instr, p0[None])
        sem_labels = np.asarray(sem_hat.data[0]).argmax(axis=0)
        decoded = decode_waypoints(np.asarray(heat.data[0]))
        frame = rollout_frame(plan, pose, tuple(episode.goal), sem_labels, decoded)
        write_ppm(os.path.join(out_dir, f"step{t:04d}-map.ppm"), frame)
        pooled = np.asarray(h_grid.data[0]).mean(axis=0)
        write_pgm(os.path.join(out_dir, f"step{t:04d}-features.pgm"), pooled)
        for name, amap in attention_images(attns[0], episode.tokens, c.token_grid):
            write_pgm(os.path.join(out_dir, f"step{t:04d}-attn-{name}.pgm"), amap)
    return len(steps)
