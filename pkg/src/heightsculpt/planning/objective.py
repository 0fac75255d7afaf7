"""Weighted 3D + visual planning objective over model rollouts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from ..actions import Action, action_to_vector
from ..dynamics.losses import loss_3d_t, loss_viz_t
from ..dynamics.model import DynamicsModel, step_t
from ..field import HeightField


class ObjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class PlanObjective:
    target: HeightField
    w_3d: float = 1.0
    w_viz: float = 1.0

    def __post_init__(self):
        if self.w_3d < 0 or self.w_viz < 0 or self.w_3d + self.w_viz <= 0:
            raise ObjectiveError(f"weights must be nonnegative with a positive sum, got ({self.w_3d}, {self.w_viz})")


def state_loss_t(states: torch.Tensor, objective: PlanObjective, target_t: torch.Tensor) -> torch.Tensor:
    """Per-state objective for a batch [B, H, W]; returns [B]."""
    t = objective.target
    out = torch.zeros(states.shape[0], dtype=states.dtype)
    if objective.w_3d:
        out = out + objective.w_3d * loss_3d_t(states, target_t, t.d_max, reduction="none")
    if objective.w_viz:
        out = out + objective.w_viz * loss_viz_t(states, target_t, t.cell_size, t.d_max, reduction="none")
    return out


def as_action_tensor(actions, dtype=torch.float64) -> torch.Tensor:
    """Physical action rows [N, 5] from a list of actions or an array/tensor."""
    if isinstance(actions, torch.Tensor):
        return actions.to(dtype)
    if len(actions) == 0:
        return torch.zeros((0, 5), dtype=dtype)
    if isinstance(actions[0], (list, tuple, np.ndarray)):
        return torch.as_tensor(np.asarray(actions, dtype=np.float64), dtype=dtype)
    return torch.as_tensor(np.stack([action_to_vector(a) for a in actions]), dtype=dtype)


def rollout_losses_t(model: DynamicsModel, start: HeightField, objective: PlanObjective, actions: torch.Tensor) -> torch.Tensor:
    """Objective of each action sequence in a batch [B, N, 5]; returns [B]."""
    dt = model.dtype
    s = torch.as_tensor(np.array(start.depths), dtype=dt)
    tgt = torch.as_tensor(np.array(objective.target.depths), dtype=dt)
    state = s.expand(actions.shape[0], *s.shape)
    for i in range(actions.shape[1]):
        state = step_t(model, state, actions[:, i].to(dt), start.cell_size, start.d_max)
    return state_loss_t(state, objective, tgt)


def plan_objective(actions: Sequence[Action] | torch.Tensor, start: HeightField, objective: PlanObjective, model: DynamicsModel) -> torch.Tensor:
    """w_3d * L_3D + w_viz * L_viz of the model rollout of ``actions`` from ``start``.

    ``actions`` may be Action objects or a physical [N, 5] tensor; in the latter
    case gradients flow back to every parameter.
    """
    if objective.target.shape != start.shape:
        raise ObjectiveError("target and start differ in shape")
    a = as_action_tensor(actions, model.dtype)
    return rollout_losses_t(model, start, objective, a.unsqueeze(0))[0]
