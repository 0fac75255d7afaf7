"""Held-out evaluation of a dynamics model against oracle records."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from ..dynamics.losses import loss_3d, loss_viz
from ..dynamics.model import DynamicsModel, placed_delta_t
from ..actions import action_to_vector
from ..field import to_point_cloud
from ..sim.dataset import Dataset
from .pointcloud import chamfer, emd_details

VOXEL_DIVISIONS = 24


@dataclass
class MetricReport:
    l_3d: float
    l_viz: float
    chamfer: float
    emd: float
    emd_approx: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for k in ("l_3d", "l_viz", "chamfer", "emd"):
            v = getattr(self, k)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"metric {k} = {v} must be finite and nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


def predict_batch(model: DynamicsModel, records, batch_size: int = 32) -> list[np.ndarray]:
    """Predicted after-state depths for each record."""
    out = []
    dt = model.dtype
    for i in range(0, len(records), batch_size):
        chunk = records[i : i + batch_size]
        s = torch.as_tensor(np.stack([r.before.depths for r in chunk]), dtype=dt)
        a = torch.as_tensor(np.stack([action_to_vector(r.action) for r in chunk]), dtype=dt)
        with torch.no_grad():
            delta = placed_delta_t(model, s, a, chunk[0].before.cell_size).double().numpy()
        for r, d in zip(chunk, delta):
            out.append(np.clip(r.before.depths + d, 0.0, r.before.d_max))
    return out


def eval_model(model, test: Dataset, voxel_size: float | None = None, clouds: bool = True, seed: int = 0) -> MetricReport:
    """Mean full-field L_3D / L_viz and point-cloud CD / EMD over ``test``.

    ``model`` may also be any callable ``(state, action) -> HeightField``.
    Records are processed in a canonical (sorted) order so the report does not
    depend on dataset ordering.
    """
    if len(test) == 0:
        raise ValueError("empty test set")
    records = sorted(test.records, key=lambda r: (r.before.depths.tobytes(), tuple(action_to_vector(r.action))))
    if isinstance(model, DynamicsModel):
        preds = [r.after.with_depths(p) for r, p in zip(records, predict_batch(model, records))]
    else:
        preds = [model(r.before, r.action) for r in records]
    l3 = [loss_3d(p, r.after) for p, r in zip(preds, records)]
    lv = [loss_viz(p, r.after) for p, r in zip(preds, records)]
    cd, em, approx = 0.0, 0.0, False
    if clouds:
        vs = voxel_size or max(records[0].before.extent_mm) / VOXEL_DIVISIONS
        cds, ems = [], []
        for p, r in zip(preds, records):
            pa, pb = to_point_cloud(p, vs), to_point_cloud(r.after, vs)
            cds.append(chamfer(pa, pb))
            e, ap = emd_details(pa, pb, seed)
            ems.append(e)
            approx |= ap
        cd, em = float(np.mean(cds)), float(np.mean(ems))
    meta = dict(test.meta)
    meta.update(n_samples=len(test), data_hash=test.content_hash(), voxel_divisions=VOXEL_DIVISIONS)
    if isinstance(model, DynamicsModel):
        meta.update(objective=model.meta.get("objective"), train_hash=model.meta.get("data_hash"))
    return MetricReport(float(np.mean(l3)), float(np.mean(lv)), cd, em, approx, meta)


def zero_delta_losses(test: Dataset) -> tuple[float, float]:
    """Losses of predicting no change at all."""
    return (
        float(np.mean([loss_3d(r.before, r.after) for r in test.records])),
        float(np.mean([loss_viz(r.before, r.after) for r in test.records])),
    )
