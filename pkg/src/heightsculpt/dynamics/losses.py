"""Depth (3D) and spatial-gradient (visual) losses.

Both losses work in normalized depth units, depth / d_max. The visual loss
compares gradients of normalized depth per cell step, i.e. the mm/mm slope
scaled by cell_size / d_max, which keeps it on the same scale as the 3D loss.
"""

from __future__ import annotations

import numpy as np
import torch

from ..field import HeightField, spatial_gradient


def spatial_gradient_t(x: torch.Tensor, cell_size: float) -> tuple[torch.Tensor, torch.Tensor]:
    """Torch twin of :func:`field.spatial_gradient` over the last two dims."""
    gx = torch.cat(
        [
            x[..., :, 1:2] - x[..., :, 0:1],
            (x[..., :, 2:] - x[..., :, :-2]) / 2.0,
            x[..., :, -1:] - x[..., :, -2:-1],
        ],
        dim=-1,
    )
    gy = torch.cat(
        [
            x[..., 1:2, :] - x[..., 0:1, :],
            (x[..., 2:, :] - x[..., :-2, :]) / 2.0,
            x[..., -1:, :] - x[..., -2:-1, :],
        ],
        dim=-2,
    )
    return gx / cell_size, gy / cell_size


def loss_3d_t(pred, truth, d_max: float, reduction: str = "mean"):
    err = ((pred - truth) / d_max) ** 2
    per_item = err.flatten(-2).mean(-1)
    return per_item.mean() if reduction == "mean" else per_item


def loss_viz_t(pred, truth, cell_size: float, d_max: float, reduction: str = "mean"):
    px, py = spatial_gradient_t(pred, cell_size)
    tx, ty = spatial_gradient_t(truth, cell_size)
    k = cell_size / d_max
    per_item = 0.5 * (
        (((px - tx) * k) ** 2).flatten(-2).mean(-1) + (((py - ty) * k) ** 2).flatten(-2).mean(-1)
    )
    return per_item.mean() if reduction == "mean" else per_item


def _check_pair(pred: HeightField, truth: HeightField):
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")


def loss_3d(pred: HeightField, truth: HeightField) -> float:
    _check_pair(pred, truth)
    return float(np.mean(((pred.depths - truth.depths) / truth.d_max) ** 2))


def loss_viz(pred: HeightField, truth: HeightField) -> float:
    _check_pair(pred, truth)
    gp, gt = spatial_gradient(pred), spatial_gradient(truth)
    k = truth.cell_size / truth.d_max
    return float(0.5 * (np.mean(((gp.dx - gt.dx) * k) ** 2) + np.mean(((gp.dy - gt.dy) * k) ** 2)))
