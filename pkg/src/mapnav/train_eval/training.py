"""Joint training loop: minibatch optimization of the waypoint and map
losses with Adam, deterministic under a fixed seed."""
from __future__ import annotations

import csv
import os

import numpy as np

from .. import numerics as nm
from ..config import RunConfig
from ..errors import NumericError, UsageError
from ..model import CM2Model, loss_map, loss_total, loss_waypoint
from .dataset import TrainingRecord, record_arrays


def assemble_batch(records: list[TrainingRecord], sigma: float):
    """Stack record arrays into batched model inputs and targets."""
    occ, chi, sem, hm, vis, p0, xi = zip(*(record_arrays(r, sigma=sigma)
                                           for r in records))
    tokens = [r.tokens for r in records]
    return (np.stack(occ), np.stack(chi), np.stack(sem), np.stack(hm),
            np.stack(vis).astype(np.float64), np.stack(p0), np.stack(xi), tokens)


def batch_loss(model: CM2Model, batch, config: RunConfig):
    """Forward pass and combined loss for one minibatch.

    Returns (total loss tensor, waypoint-loss value, map-loss value)."""
    occ, chi, sem, hm, vis, p0, xi, tokens = batch
    instr = [model.encode_instruction(t) for t in tokens]
    if config.mode == "cm2-gt":
        # path prediction on ground-truth semantic maps; no map heads
        heat, trav, _, _ = model.predict_path(sem, instr, p0)
        l_wp = loss_waypoint(heat, hm, vis, trav, xi, lambda_aux=config.lambda_xi)
        return l_wp, float(l_wp.item()), 0.0
    occ_hat, sem_hat, _, _ = model.predict_maps(occ, chi, instr)
    heat, trav, _, _ = model.predict_path(sem_hat, instr, p0)
    l_wp = loss_waypoint(heat, hm, vis, trav, xi, lambda_aux=config.lambda_xi)
    l_m = loss_map(occ_hat, sem_hat, occ, sem)
    total = loss_total(l_wp, l_m, config.lambda_wp, config.lambda_m)
    return total, float(l_wp.item()), float(l_m.item())


def train(config: RunConfig, records: list[TrainingRecord], out_dir,
          steps: int | None = None, log_every: int = 50) -> tuple[CM2Model, list[dict]]:
    """Train a model on the given records; writes checkpoint(s) and a loss
    curve CSV into ``out_dir``. Returns (model, loss history)."""
    if not records:
        raise UsageError("training requires a non-empty dataset")
    config.validate()
    steps = config.train_steps if steps is None else steps
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    model = CM2Model(config.model_config(), rng=rng)
    params = model.params
    opt = nm.Adam(params, lr=config.lr)
    history = []
    ckpt_path = os.path.join(out_dir, "model.ckpt")
    curve_path = os.path.join(out_dir, "loss_curve.csv")
    with open(curve_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "loss_wp", "loss_m"])
        for step in range(steps):
            idx = rng.integers(0, len(records), size=min(config.batch_size, len(records)))
            batch = assemble_batch([records[i] for i in idx], config.sigma)
            model.zero_grad()
            loss, l_wp, l_m = batch_loss(model, batch, config)
            value = float(loss.item())
            if not np.isfinite(value):
                raise NumericError(f"loss diverged to {value} at step {step}")
            loss.backward()
            opt.step(only_with_grad=True)
            row = {"step": step, "loss": value, "loss_wp": l_wp, "loss_m": l_m}
            history.append(row)
            writer.writerow([step, f"{value:.6f}", f"{l_wp:.6f}", f"{l_m:.6f}"])
            if config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
                model.save(ckpt_path)
    model.save(ckpt_path)
    return model, history
