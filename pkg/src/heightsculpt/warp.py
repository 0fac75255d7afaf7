"""Rigid canonical-pose warps between a full heightfield and an action patch.

In the canonical frame a push starts at a fixed anchor pixel and travels along
+x (left to right); a pinch is centred on its anchor with the jaws closing
along x. Patches share the field's cell size.

All tensor functions are batched: depths ``[B, H, W]``, poses ``[B, 3]`` as
(x, y, theta) with x, y in unit workspace coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .actions import Action
from .field import HeightField

DEFAULT_PATCH = 64


def anchor_for(kind: str, patch_side: int) -> tuple[float, float]:
    """(row, col) of the action start inside a canonical patch."""
    if kind == "push":
        return patch_side // 2, patch_side // 4
    return patch_side // 2, patch_side // 2


def _pose_parts(pose, hw, cell_size):
    h, w = hw
    px = pose[:, 0] * (w * cell_size)
    py = pose[:, 1] * (h * cell_size)
    return px, py, torch.cos(pose[:, 2]), torch.sin(pose[:, 2])


def warp_to_canonical(depths, pose, cell_size, patch_side=DEFAULT_PATCH, anchor=None):
    """Sample ``depths`` on the canonical patch grid; border values replicate."""
    b, h, w = depths.shape
    if anchor is None:
        anchor = anchor_for("push", patch_side)
    ar, ac = anchor
    idx = torch.arange(patch_side, dtype=depths.dtype, device=depths.device)
    u = ((idx - ac) * cell_size).view(1, 1, patch_side)  # along the action
    v = ((idx - ar) * cell_size).view(1, patch_side, 1)  # lateral
    px, py, c, s = (t.view(-1, 1, 1) for t in _pose_parts(pose, (h, w), cell_size))
    fx = px + u * c - v * s
    fy = py + u * s + v * c
    col = fx / cell_size - 0.5
    row = fy / cell_size - 0.5
    grid = torch.stack([2 * col / (w - 1) - 1, 2 * row / (h - 1) - 1], dim=-1)
    out = F.grid_sample(
        depths.unsqueeze(1), grid, mode="bilinear", padding_mode="border", align_corners=True
    )
    return out[:, 0]


def warp_from_canonical(patches, pose, out_hw, cell_size, anchor=None):
    """Place canonical patches back into field coordinates; zero outside the patch."""
    b, p, _ = patches.shape
    h, w = out_hw
    if anchor is None:
        anchor = anchor_for("push", p)
    ar, ac = anchor
    dt, dev = patches.dtype, patches.device
    cx = ((torch.arange(w, dtype=dt, device=dev) + 0.5) * cell_size).view(1, 1, w)
    cy = ((torch.arange(h, dtype=dt, device=dev) + 0.5) * cell_size).view(1, h, 1)
    px, py, c, s = (t.view(-1, 1, 1) for t in _pose_parts(pose, (h, w), cell_size))
    rx = cx - px
    ry = cy - py
    u = rx * c + ry * s
    v = -rx * s + ry * c
    pc = ac + u / cell_size
    pr = ar + v / cell_size
    grid = torch.stack([2 * pc / (p - 1) - 1, 2 * pr / (p - 1) - 1], dim=-1)
    out = F.grid_sample(
        patches.unsqueeze(1), grid, mode="bilinear", padding_mode="zeros", align_corners=True
    )
    return out[:, 0]


@dataclass(frozen=True)
class CanonicalPatch:
    values: np.ndarray
    kind: str = "push"

    @property
    def side(self) -> int:
        return self.values.shape[0]

    @property
    def anchor(self) -> tuple[float, float]:
        return anchor_for(self.kind, self.side)


def _pose_tensor(action: Action) -> torch.Tensor:
    return torch.tensor([[action.x, action.y, action.theta]], dtype=torch.float64)


def to_canonical(field: HeightField, action: Action, patch_side: int = DEFAULT_PATCH) -> CanonicalPatch:
    return CanonicalPatch(canonical_values(field.depths, field.cell_size, action, patch_side), action.kind)


def canonical_values(grid: np.ndarray, cell_size: float, action: Action, patch_side: int = DEFAULT_PATCH) -> np.ndarray:
    """``to_canonical`` for a raw array (e.g. a depth delta rather than a state)."""
    t = torch.from_numpy(np.array(grid, dtype=np.float64)).unsqueeze(0)
    out = warp_to_canonical(t, _pose_tensor(action), cell_size, patch_side, anchor_for(action.kind, patch_side))
    return out[0].numpy()


def from_canonical(patch, action: Action, target_shape: tuple[int, int], cell_size: float) -> np.ndarray:
    """Additive delta field for ``patch`` placed at ``action``'s pose."""
    values = patch.values if isinstance(patch, CanonicalPatch) else np.asarray(patch, dtype=np.float64)
    side = values.shape[0]
    t = torch.from_numpy(np.array(values, dtype=np.float64)).unsqueeze(0)
    out = warp_from_canonical(t, _pose_tensor(action), tuple(target_shape), cell_size, anchor_for(action.kind, side))
    return out[0].numpy()
