from __future__ import annotations

import logging
import math

import numpy as np
import torch

from ..sim.dataset import Dataset
from .losses import loss_3d_t, loss_viz_t
from .model import DynamicsModel

log = logging.getLogger(__name__)

OBJECTIVES = ("3d", "3d+viz")


class TrainingError(RuntimeError):
    pass


def _tensors(ds: Dataset, dtype):
    arr = ds.arrays()
    return (
        torch.as_tensor(arr["patch_before"], dtype=dtype),
        torch.as_tensor(arr["patch_delta"], dtype=dtype),
        torch.as_tensor(arr["shape"], dtype=dtype),
    )


def patch_losses(model, before, delta, shape, objective, cell_size, d_max):
    """(total, l3d, lviz) of predicted vs true canonical deltas for one batch."""
    cfg = model.config
    params = torch.stack([shape[:, 0] / cfg.shape_scale, shape[:, 1] / cfg.depth_scale], dim=-1)
    pred = model.net(before, params)
    l3d = loss_3d_t(pred, delta, d_max)
    lviz = loss_viz_t(pred, delta, cell_size, d_max)
    total = l3d + lviz if objective == "3d+viz" else l3d
    return total, l3d, lviz


def evaluate_patches(model, ds: Dataset, objective="3d", batch_size=64) -> dict:
    """Mean canonical-patch losses over ``ds`` without touching gradients."""
    before, delta, shape = _tensors(ds, model.dtype)
    r0 = ds.records[0].before
    sums = np.zeros(3)
    with torch.no_grad():
        for i in range(0, len(ds), batch_size):
            sl = slice(i, i + batch_size)
            vals = patch_losses(model, before[sl], delta[sl], shape[sl], objective, r0.cell_size, r0.d_max)
            sums += np.array([float(v) for v in vals]) * before[sl].shape[0]
    total, l3d, lviz = sums / len(ds)
    return {"loss": total, "loss_3d": l3d, "loss_viz": lviz}


def train(
    model: DynamicsModel,
    dataset: Dataset,
    objective: str = "3d",
    epochs: int = 40,
    lr: float = 3e-3,
    seed: int = 0,
    batch_size: int = 16,
    decay_every: int | None = None,
    decay: float = 0.5,
    val_fraction: float = 0.1,
) -> tuple[DynamicsModel, list[dict]]:
    """Fit the canonical-delta predictor by mini-batch Adam with step decay.

    The dataset is split 90/10 by a seeded shuffle; the history holds one entry
    per epoch (entry 0 is the untrained model) with train and validation losses.
    """
    if objective not in OBJECTIVES:
        raise TrainingError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    if len(dataset) == 0:
        raise TrainingError("cannot train on an empty dataset")
    if dataset.kind != model.config.kind:
        raise TrainingError(f"{dataset.kind} data cannot train a {model.config.kind} model")
    train_ds, val_ds = dataset.split(val_fraction, seed)
    r0 = dataset.records[0].before
    cs, d_max = r0.cell_size, r0.d_max
    before, delta, shape = _tensors(train_ds, model.dtype)
    n = before.shape[0]

    # losses in d_max units are ~1e-5, too close to Adam's eps; optimise in z_max units
    scale = (d_max / model.config.depth_scale) ** 2
    opt = torch.optim.Adam(model.net.parameters(), lr=lr)
    step = decay_every or max(1, math.ceil(epochs / 3))
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=step, gamma=decay)
    gen = torch.Generator().manual_seed(seed)

    def snapshot(epoch, train_loss):
        entry = {"epoch": epoch, "train_loss": train_loss}
        if len(val_ds):
            v = evaluate_patches(model, val_ds, objective)
            entry.update(val_loss=v["loss"], val_loss_3d=v["loss_3d"], val_loss_viz=v["loss_viz"])
        return entry

    history = [snapshot(0, evaluate_patches(model, train_ds, objective)["loss"])]
    for epoch in range(1, epochs + 1):
        model.net.train()
        order = torch.randperm(n, generator=gen)
        total = 0.0
        for i in range(0, n, batch_size):
            idx = order[i : i + batch_size]
            loss, _, _ = patch_losses(model, before[idx], delta[idx], shape[idx], objective, cs, d_max)
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss.item()} at epoch {epoch}, batch {i // batch_size}")
            opt.zero_grad()
            (loss * scale).backward()
            opt.step()
            total += loss.item() * idx.numel()
        sched.step()
        model.net.eval()
        history.append(snapshot(epoch, total / n))
        log.debug("epoch %d train %.3g", epoch, history[-1]["train_loss"])

    model.net.eval()
    model.meta.update(
        epochs=model.meta.get("epochs", 0) + epochs,
        objective=objective,
        data_hash=dataset.content_hash(),
        n_samples=len(dataset),
        history=history,
    )
    return model, history
