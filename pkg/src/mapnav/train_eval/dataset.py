"""Training record construction and a compact deterministic binary format.

Each record captures one pose sampled along an episode's ground-truth path:
the accumulated-occupancy ego crop, the single-frame semantic observation,
the ground-truth semantic crop, and the waypoint supervision targets.
Grids are stored as label maps (uint8) and expanded to one-hot / Gaussian
form at batch-assembly time.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import UsageError
from ..language.vocab import MAX_TOKENS
from ..mapping import (FREE, OCC, UNK, crop_ego_occupancy, crop_ego_semantic,
                       ground_project, new_global_occupancy, update_global)
from ..model.supervision import make_gt_heatmaps, nearest_arc_length, sample_waypoints
from ..mapping import world_to_ego
from ..worldsim.agent import Pose, raycast, wrap_angle
from ..worldsim.floorplan import NUM_CLASSES

MAGIC = b"CM2DATA1"
HEADING_JITTER = np.deg2rad(30.0)
HISTORY_SPACING = 0.5      # meters between simulated sensor poses on the path


@dataclass
class TrainingRecord:
    episode_id: int
    t: int                      # sample index within the episode
    pose: Pose
    tokens: np.ndarray          # (MAX_TOKENS,) int
    occ_labels: np.ndarray      # (s,s) uint8 in {OCC, FREE, UNK}
    chi_labels: np.ndarray      # (s,s) uint8 observed class (0 = void)
    sem_labels: np.ndarray      # (s,s) uint8 ground-truth class
    waypoints_ego: np.ndarray   # (k,2) float64 ego (forward, right) meters
    traversed: np.ndarray       # (k,) uint8 0/1


def record_arrays(rec: TrainingRecord, num_classes: int = NUM_CLASSES,
                  sigma: float = 1.0):
    """Expand a record into model inputs and supervision targets.

    Returns (occ (3,s,s), chi (c,s,s), sem_gt (c,s,s), heatmaps (k,u,u),
    visibility (k,), start_heatmap (1,u,u), traversed (k,))."""
    s = rec.occ_labels.shape[0]
    u = s // 2
    occ = np.zeros((3, s, s))
    for ch in (OCC, FREE, UNK):
        occ[ch] = rec.occ_labels == ch
    rows, cols = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
    chi = np.zeros((num_classes, s, s))
    chi[rec.chi_labels.astype(int), rows, cols] = 1.0
    sem = np.zeros((num_classes, s, s))
    sem[rec.sem_labels.astype(int), rows, cols] = 1.0
    heatmaps, vis = make_gt_heatmaps(rec.waypoints_ego, u, u, sigma)
    start_hm, _ = make_gt_heatmaps(rec.waypoints_ego[:1], u, u, sigma)
    return occ, chi, sem, heatmaps, vis, start_hm, rec.traversed.astype(np.float64)


def _path_point(path: np.ndarray, arcs: np.ndarray, s: float) -> np.ndarray:
    return np.array([np.interp(s, arcs, path[:, 0]), np.interp(s, arcs, path[:, 1])])


def _path_heading(path: np.ndarray, arcs: np.ndarray, s: float) -> float:
    ahead = _path_point(path, arcs, min(s + 0.2, arcs[-1]))
    here = _path_point(path, arcs, max(s - 0.05, 0.0))
    d = ahead - here
    if np.hypot(*d) < 1e-9:
        return 0.0
    return float(np.arctan2(d[1], d[0]))


def build_episode_records(plan, episode, samples_per_episode: int, k: int,
                          ego_size: int, rng: np.random.Generator,
                          num_rays: int = 64, max_range: float = 4.8,
                          p_noise: float = 0.0) -> list[TrainingRecord]:
    """Sample poses along the ground-truth path and snapshot the accumulated
    sensor map at each, walking the path once in order."""
    path = np.asarray(episode.gt_path)
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    arcs = np.concatenate([[0.0], np.cumsum(seg)])
    total = arcs[-1]
    sample_arcs = np.linspace(0.0, total, samples_per_episode)
    wps, wp_arcs = sample_waypoints(path, k)

    gmap = new_global_occupancy(plan.grid.shape[0])
    records = []
    history_s = 0.0
    for t, sa in enumerate(sample_arcs):
        # advance the sensor history along the path up to this sample
        while history_s <= sa + 1e-9:
            hp = _path_point(path, arcs, history_s)
            hpose = Pose(hp[0], hp[1], _path_heading(path, arcs, history_s))
            scan = raycast(plan, hpose, num_rays=num_rays, max_range=max_range,
                           p_noise=p_noise, rng=rng)
            occ_frame, _ = ground_project(scan, ego_size)
            update_global(gmap, occ_frame, hpose)
            if history_s >= total:
                break
            history_s = min(history_s + HISTORY_SPACING, total)
        p = _path_point(path, arcs, sa)
        theta = wrap_angle(_path_heading(path, arcs, sa)
                           + rng.uniform(-HEADING_JITTER, HEADING_JITTER))
        pose = Pose(float(p[0]), float(p[1]), theta)
        scan = raycast(plan, pose, num_rays=num_rays, max_range=max_range,
                       p_noise=p_noise, rng=rng)
        occ_frame, chi_frame = ground_project(scan, ego_size)
        update_global(gmap, occ_frame, pose)
        occ_crop = crop_ego_occupancy(gmap, pose, ego_size)
        sem_crop = crop_ego_semantic(plan, pose, ego_size)
        traversed = (wp_arcs <= sa + 1e-9).astype(np.uint8)
        records.append(TrainingRecord(
            episode_id=episode.episode_id, t=t, pose=pose,
            tokens=np.asarray(episode.tokens, dtype=np.int64),
            occ_labels=occ_crop.argmax(axis=0).astype(np.uint8),
            chi_labels=chi_frame.argmax(axis=0).astype(np.uint8),
            sem_labels=sem_crop.argmax(axis=0).astype(np.uint8),
            waypoints_ego=world_to_ego(pose, wps),
            traversed=traversed,
        ))
    return records


def build_dataset(plans_episodes, samples_per_episode: int, k: int,
                  ego_size: int, seed: int, num_rays: int = 64,
                  max_range: float = 4.8, p_noise: float = 0.0) -> list[TrainingRecord]:
    """``plans_episodes``: iterable of (Floorplan, Episode) pairs."""
    records = []
    for plan, episode in plans_episodes:
        rng = np.random.default_rng([seed, episode.floorplan_seed, episode.episode_id])
        records.extend(build_episode_records(
            plan, episode, samples_per_episode, k, ego_size, rng,
            num_rays=num_rays, max_range=max_range, p_noise=p_noise))
    return records


# ----------------------------------------------------------------------
def generate_split(config, floorplan_seeds, episode_offset: int,
                   episodes_per_plan: int) -> list:
    """(Floorplan, Episode) pairs for the given floorplan seeds; episode
    seeds are offset so train and eval episodes on shared floorplans
    differ."""
    from ..worldsim.episodes import generate_episode
    from ..worldsim.floorplan import generate_floorplan
    from ..errors import GenerationError
    pairs = []
    for fp_seed in floorplan_seeds:
        plan = generate_floorplan(fp_seed, size=config.world_size)
        made = 0
        attempt = 0
        while made < episodes_per_plan and attempt < episodes_per_plan * 5:
            try:
                ep = generate_episode(plan, episode_offset + attempt,
                                      episode_id=fp_seed * 100000 + episode_offset + made)
                pairs.append((plan, ep))
                made += 1
            except GenerationError:
                pass
            attempt += 1
    return pairs


def generate_splits(config) -> dict[str, list]:
    """Train records source plus seen/unseen evaluation splits.

    "seen": fresh episodes on training floorplans; "unseen": episodes on
    held-out floorplans."""
    train_seeds = range(config.num_floorplans)
    unseen_seeds = range(config.num_floorplans,
                         config.num_floorplans + config.heldout_floorplans)
    n_eval = max(1, config.eval_episodes // max(1, config.num_floorplans))
    return {
        "train": generate_split(config, train_seeds, 0, config.episodes_per_floorplan),
        "seen": generate_split(config, train_seeds, 1000, n_eval),
        "unseen": generate_split(config, unseen_seeds, 2000,
                                 max(1, config.eval_episodes // max(1, config.heldout_floorplans))),
    }


def save_records(path, records: list[TrainingRecord]):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        if not records:
            fh.write(struct.pack("<IHHH", 0, 0, 0, 0))
            return
        s = records[0].occ_labels.shape[0]
        k = len(records[0].waypoints_ego)
        fh.write(struct.pack("<IHHH", len(records), s, k, MAX_TOKENS))
        for r in records:
            fh.write(struct.pack("<IH", r.episode_id, r.t))
            fh.write(struct.pack("<3d", r.pose.x, r.pose.y, r.pose.theta))
            fh.write(np.asarray(r.tokens, dtype="<u2").tobytes())
            fh.write(r.occ_labels.astype(np.uint8).tobytes())
            fh.write(r.chi_labels.astype(np.uint8).tobytes())
            fh.write(r.sem_labels.astype(np.uint8).tobytes())
            fh.write(r.waypoints_ego.astype("<f8").tobytes())
            fh.write(r.traversed.astype(np.uint8).tobytes())


def load_records(path) -> list[TrainingRecord]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise UsageError(f"{path}: not a training-record file")
    off = 8
    count, s, k, m = struct.unpack_from("<IHHH", data, off)
    off += 10
    records = []
    for _ in range(count):
        episode_id, t = struct.unpack_from("<IH", data, off)
        off += 6
        x, y, theta = struct.unpack_from("<3d", data, off)
        off += 24
        tokens = np.frombuffer(data, "<u2", m, off).astype(np.int64)
        off += 2 * m
        occ = np.frombuffer(data, np.uint8, s * s, off).reshape(s, s).copy()
        off += s * s
        chi = np.frombuffer(data, np.uint8, s * s, off).reshape(s, s).copy()
        off += s * s
        sem = np.frombuffer(data, np.uint8, s * s, off).reshape(s, s).copy()
        off += s * s
        wps = np.frombuffer(data, "<f8", k * 2, off).reshape(k, 2).copy()
        off += 16 * k
        xi = np.frombuffer(data, np.uint8, k, off).copy()
        off += k
        records.append(TrainingRecord(
            episode_id=episode_id, t=t, pose=Pose(x, y, theta), tokens=tokens,
            occ_labels=occ, chi_labels=chi, sem_labels=sem,
            waypoints_ego=wps, traversed=xi))
    return records
