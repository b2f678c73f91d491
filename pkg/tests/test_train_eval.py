import math
import os
from types import SimpleNamespace

import numpy as np
import pytest

from mapnav.config import RunConfig
from mapnav.errors import NumericError, UsageError
from mapnav.model.supervision import ego_to_heatmap_cell
from mapnav.train_eval import (
    METRIC_COLUMNS, TAU_SWEEP, VARIANTS, NavMetrics, aggregate_nav,
    assemble_batch, build_dataset, build_episode_records, compute_map_metrics,
    compute_pcw, episode_metrics, evaluate_map_quality, format_table,
    generate_split, load_records, run_suite, save_records, summarize, train,
    variant_config, write_report,
)
from mapnav.worldsim import (
    FLOOR, WALL, Floorplan, generate_episode, generate_floorplan,
)


def tiny_config(**over):
    base = dict(ego_size=24, d=16, k=5, unet_base=8, unet_depth=3,
                n_instr_layers=1, batch_size=4, train_steps=5,
                checkpoint_every=0, num_floorplans=2, heldout_floorplans=1,
                episodes_per_floorplan=2, samples_per_episode=4,
                eval_episodes=2, seed=0)
    base.update(over)
    return RunConfig(**base).validate()


def box_plan(size=64):
    grid = np.full((size, size), FLOOR, dtype=np.uint8)
    grid[0, :] = grid[-1, :] = WALL
    grid[:, 0] = grid[:, -1] = WALL
    return Floorplan(grid=grid, seed=0)


def fake_episode(goal, length):
    return SimpleNamespace(goal=goal, path_length=length)


# ------------------------------------------------------------------ dataset
@pytest.fixture(scope="module")
def records(plan, episode):
    rng = np.random.default_rng(0)
    return build_episode_records(plan, episode, 6, 5, 24, rng)


def test_record_supervision_invariants(records):
    assert len(records) == 6
    for rec in records:
        xi = rec.traversed.astype(float)
        assert xi[0] == 1.0
        assert np.all(np.diff(xi) <= 0.0)  # prefix-monotone
    assert records[0].traversed.sum() == 1   # at path start
    assert records[-1].traversed.sum() == 5  # at path end


def test_record_visibility_consistency(records):
    for rec in records:
        _, _, _, _, vis, _, _ = __import__(
            "mapnav.train_eval.dataset", fromlist=["record_arrays"]
        ).record_arrays(rec, sigma=1.0)
        for i, (f, r) in enumerate(rec.waypoints_ego):
            cr, cc = ego_to_heatmap_cell(f, r, 12, 12)
            assert vis[i] == (0 <= cr < 12 and 0 <= cc < 12)


def test_record_array_shapes(records):
    from mapnav.train_eval.dataset import record_arrays
    occ, chi, sem, hm, vis, p0, xi = record_arrays(records[0], sigma=1.0)
    assert occ.shape == (3, 24, 24) and np.allclose(occ.sum(axis=0), 1.0)
    assert chi.shape[1:] == (24, 24) and np.allclose(chi.sum(axis=0), 1.0)
    assert sem.shape == chi.shape
    assert hm.shape == (5, 12, 12) and p0.shape == (1, 12, 12)
    assert vis.shape == (5,) and xi.shape == (5,)


def test_dataset_deterministic_and_serializable(plan, episode, tmp_path):
    a = build_dataset([(plan, episode)], 3, 5, 24, seed=7)
    b = build_dataset([(plan, episode)], 3, 5, 24, seed=7)
    pa, pb = tmp_path / "a.bin", tmp_path / "b.bin"
    save_records(pa, a)
    save_records(pb, b)
    assert pa.read_bytes() == pb.read_bytes()
    loaded = load_records(pa)
    assert len(loaded) == len(a)
    for x, y in zip(loaded, a):
        assert x.episode_id == y.episode_id and x.t == y.t
        assert np.array_equal(x.occ_labels, y.occ_labels)
        assert np.array_equal(x.waypoints_ego, y.waypoints_ego)
        assert np.array_equal(x.tokens, y.tokens)


def test_load_rejects_bad_magic(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTDATA!" + b"\x00" * 16)
    with pytest.raises(UsageError):
        load_records(bad)


def test_generate_split_layout():
    config = tiny_config()
    train_pairs = generate_split(config, range(2), 0, 2)
    seen_pairs = generate_split(config, range(2), 1000, 1)
    assert len(train_pairs) == 4 and len(seen_pairs) == 2
    train_ids = {ep.episode_id for _, ep in train_pairs}
    seen_ids = {ep.episode_id for _, ep in seen_pairs}
    assert train_ids.isdisjoint(seen_ids)
    # same floorplans, different episodes
    assert {p.seed for p, _ in train_pairs} == {p.seed for p, _ in seen_pairs}


# ------------------------------------------------------------------ metrics
def test_metrics_hand_computed_table():
    plan = box_plan()
    goal = (6.1, 3.1)
    ep = fake_episode(goal, 3.0)
    start = (3.1, 3.1)

    a = episode_metrics(plan, ep, [start, goal], True, 1.0)
    assert a.tl == pytest.approx(3.0)
    assert a.ne == 0.0
    assert (a.sr, a.os_) == (1.0, 1.0)
    assert a.spl == pytest.approx(1.0)

    detour = [start, (3.1, 6.1), start, (5.6, 3.1)]
    b = episode_metrics(plan, ep, detour, True, 1.0)
    assert b.tl == pytest.approx(8.5)
    assert b.ne == pytest.approx(0.5)
    assert (b.sr, b.os_) == (1.0, 1.0)
    assert b.spl == pytest.approx(3.0 / 8.5)

    c = episode_metrics(plan, ep, [start, (3.1, 6.1), start, (5.4, 3.1)],
                        False, 1.0)
    assert c.ne == pytest.approx(0.7)
    assert (c.sr, c.os_, c.spl) == (0.0, 1.0, 0.0)

    d = episode_metrics(plan, ep, [start, (4.1, 3.1)], True, 1.0)
    assert d.ne == pytest.approx(2.0)
    assert (d.sr, d.os_, d.spl) == (0.0, 0.0, 0.0)

    e = episode_metrics(plan, ep, [start, goal], False, 1.0)
    assert (e.ne, e.sr, e.os_, e.spl) == (0.0, 0.0, 1.0, 0.0)

    agg = aggregate_nav([a, b, c, d, e])
    assert agg["SR"] == pytest.approx(40.0)
    assert agg["OS"] == pytest.approx(80.0)
    assert agg["SPL"] == pytest.approx(100.0 * (1.0 + 3.0 / 8.5) / 5.0)
    assert agg["TL"] == pytest.approx((3.0 + 8.5 + 8.3 + 1.0 + 3.0) / 5.0)
    assert agg["NE"] == pytest.approx((0.0 + 0.5 + 0.7 + 2.0 + 0.0) / 5.0)


def test_metric_invariants_random(rng):
    plan = box_plan()
    for _ in range(20):
        n = int(rng.integers(1, 6))
        traj = [tuple(rng.uniform(1.0, 11.0, size=2)) for _ in range(n)]
        goal = tuple(rng.uniform(1.0, 11.0, size=2))
        ep = fake_episode(goal, float(rng.uniform(3.0, 9.0)))
        m = episode_metrics(plan, ep, traj, bool(rng.integers(2)), 1.0)
        assert m.tl >= 0.0
        assert m.spl <= m.sr
        assert m.os_ >= m.sr


def test_map_metrics_closed_forms():
    gt = np.array([[1, 1, 2, 2]] * 4)
    assert compute_map_metrics(gt, gt) == {"IoU": 100.0, "F1": 100.0}

    disjoint = np.array([[2, 2, 1, 1]] * 4)
    out = compute_map_metrics(disjoint, gt)
    assert out["IoU"] == 0.0 and out["F1"] == 0.0

    half = np.array([[2, 1, 2, 1]] * 4)  # each class half-overlaps its truth
    out = compute_map_metrics(half, gt)
    assert out["IoU"] == pytest.approx(100.0 / 3.0)
    assert out["F1"] == pytest.approx(50.0)


def test_map_metrics_excludes_void():
    gt = np.array([[0, 0, 1, 1]])
    pred = np.array([[1, 1, 1, 1]])  # wrong on void cells only
    out = compute_map_metrics(pred, gt)
    assert out["F1"] == pytest.approx(2 * 2 / (2 * 2 + 2 + 0) * 100.0)


def test_pcw_cases():
    gt = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    vis = np.array([True, True, False])
    assert compute_pcw([(0.0, 0.0), (1.0, 1.0), None], gt, vis) == 100.0
    assert compute_pcw([(2.5, 0.0), (1.0, 3.6), None], gt, vis) == 0.0
    assert compute_pcw([None, (1.0, 1.0), None], gt, vis) == 50.0
    assert compute_pcw([(9.0, 9.0)], np.array([[0.0, 0.0]]),
                       np.array([False])) == 100.0  # nothing visible


# ----------------------------------------------------------------- training
@pytest.fixture(scope="module")
def train_records(plan):
    eps = [generate_episode(plan, s, episode_id=s) for s in range(2)]
    return build_dataset([(plan, ep) for ep in eps], 4, 5, 24, seed=1)


def test_training_deterministic(train_records, tmp_path):
    config = tiny_config()
    _, h1 = train(config, train_records, tmp_path / "r1")
    _, h2 = train(config, train_records, tmp_path / "r2")
    assert [r["loss"] for r in h1] == [r["loss"] for r in h2]
    assert (tmp_path / "r1" / "model.ckpt").read_bytes() == \
           (tmp_path / "r2" / "model.ckpt").read_bytes()
    assert (tmp_path / "r1" / "loss_curve.csv").exists()


def test_training_loss_decreases(train_records, tmp_path):
    config = tiny_config(mode="cm2-gt", train_steps=60)
    _, history = train(config, train_records, tmp_path / "gt")
    first = history[0]["loss"]
    tail = float(np.mean([r["loss"] for r in history[-10:]]))
    assert tail < first


def test_training_rejects_empty_dataset(tmp_path):
    with pytest.raises(UsageError):
        train(tiny_config(), [], tmp_path / "x")


def test_training_aborts_on_divergence(train_records, tmp_path, monkeypatch):
    import mapnav.train_eval.training as training_mod

    class NanLoss:
        def item(self):
            return float("nan")

    monkeypatch.setattr(training_mod, "batch_loss",
                        lambda model, batch, config: (NanLoss(), float("nan"), 0.0))
    with pytest.raises(NumericError):
        training_mod.train(tiny_config(mode="cm2-gt"), train_records,
                           tmp_path / "boom")


def test_assemble_batch_shapes(train_records):
    batch = assemble_batch(train_records[:3], sigma=1.0)
    occ, chi, sem, hm, vis, p0, xi, tokens = batch
    assert occ.shape == (3, 3, 24, 24)
    assert hm.shape == (3, 5, 12, 12)
    assert vis.shape == (3, 5) and xi.shape == (3, 5)
    assert len(tokens) == 3


# ---------------------------------------------------------------- ablations
def test_variant_config_overrides():
    base = tiny_config()
    assert variant_config(base, "no-mapattn", 3).use_map_attention is False
    assert variant_config(base, "no-p0", 1).use_start_heatmap is False
    assert variant_config(base, "lambda-xi-0", 0).lambda_xi == 0.0
    assert variant_config(base, "full", 2).seed == 2
    assert set(VARIANTS) == {"full", "no-mapattn", "no-p0", "lambda-xi-0"}
    assert TAU_SWEEP == (0.5, 1.0, 1.5)


def test_run_suite_reports_missing_checkpoints(tmp_path):
    base = tiny_config()
    checkpoints = {name: {0: str(tmp_path / "nope.ckpt")} for name in VARIANTS}
    rows = run_suite(base, checkpoints, [], [], tmp_path, seeds=(0,))
    assert all(r.get("missing") for r in rows)
    assert len(rows) == len(VARIANTS)
    text = (tmp_path / "ablations.txt").read_text()
    for name in VARIANTS:
        assert name in text
    csv_text = (tmp_path / "ablations.csv").read_text()
    assert "absent" in csv_text


def test_summarize_and_table():
    rows = []
    for seed, sr in ((0, 50.0), (1, 60.0), (2, 70.0)):
        row = {"variant": "full", "seed": seed}
        row.update({c: sr for c in METRIC_COLUMNS})
        rows.append(row)
    rows.append({"variant": "no-p0", "seed": 0, "missing": True})
    summary = summarize(rows)
    mean, std = summary["full"]["SR"]
    assert mean == pytest.approx(60.0)
    assert std == pytest.approx(np.std([50.0, 60.0, 70.0]))
    table = format_table(rows)
    assert "full" in table and "checkpoint absent" in table


def test_write_report_columns(tmp_path):
    row = {"variant": "full", "seed": 0}
    row.update({c: 1.0 for c in METRIC_COLUMNS})
    write_report([row], tmp_path)
    header = (tmp_path / "ablations.csv").read_text().splitlines()[0]
    assert header == "variant,seed," + ",".join(METRIC_COLUMNS)


# ------------------------------------------------------------ map quality
def test_evaluate_map_quality_gt_mode(train_records, tmp_path):
    from mapnav.train_eval.training import train as train_fn
    config = tiny_config(mode="cm2-gt", train_steps=2)
    model, _ = train_fn(config, train_records, tmp_path / "m")
    out = evaluate_map_quality(model, config, train_records[:3])
    assert set(out) == {"PCW", "IoU", "F1"}
    assert 0.0 <= out["PCW"] <= 100.0
    assert math.isnan(out["IoU"]) and math.isnan(out["F1"])  # no map head
