"""Canonical-pose deformation predictor and its field-level wrappers."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..actions import Action, action_to_vector
from ..field import WORKSPACE_MM, DEFAULT_GRID, HeightField
from ..warp import DEFAULT_PATCH, anchor_for, warp_from_canonical, warp_to_canonical
from .losses import spatial_gradient_t

NONLINEARITIES = {"silu": nn.SiLU, "relu": nn.ReLU, "tanh": nn.Tanh, "elu": nn.ELU}


class ModelError(ValueError):
    pass


@dataclass
class ModelConfig:
    patch_side: int = DEFAULT_PATCH
    kind: str = "push"
    channels: tuple[int, int, int] = (16, 32, 32)
    kernel: int = 3
    hidden: tuple[int, int] = (64, 256)
    shape_grid: int = 16
    shape_channels: int = 4
    fusion_dilations: tuple[int, ...] = (1, 2, 4, 2, 1)
    nonlinearity: str = "silu"
    seed: int = 0
    zero_head: bool = True
    shape_scale: float = 60.0  # l_max (push) or c_max (pinch), mm
    depth_scale: float = 10.0  # z_max, mm
    cell_size: float = float(np.float32(WORKSPACE_MM / DEFAULT_GRID))

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.hidden = tuple(int(h) for h in self.hidden)
        self.fusion_dilations = tuple(int(d) for d in self.fusion_dilations)
        if len(self.channels) != 3 or len(self.hidden) != 2 or len(self.fusion_dilations) != 5:
            raise ModelError("need 3 channel widths, 2 hidden sizes (3 linear layers) and 5 fusion dilations")
        if self.kind not in ("push", "pinch"):
            raise ModelError(f"unknown action kind {self.kind!r}")
        if self.nonlinearity not in NONLINEARITIES:
            raise ModelError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.kernel % 2 != 1:
            raise ModelError("kernel size must be odd")

    @property
    def anchor(self):
        return anchor_for(self.kind, self.patch_side)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("channels", "hidden", "fusion_dilations"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def _conv(cin, cout, k, dilation=1):
    return nn.Conv2d(cin, cout, k, padding=dilation * (k // 2), dilation=dilation)


class DeformNet(nn.Module):
    """Three branches: action shape scalars, state encoder, fusion head.

    Shape: (l, z) -> 3 linear layers -> coarse 2D map -> 3 convs.
    State: [state, d/dx, d/dy] -> 3 convs.
    Fusion: concat(state features, raw state, shape encoding) -> 5 convs -> delta.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        act = NONLINEARITIES[cfg.nonlinearity]
        c1, c2, c3 = cfg.channels
        k = cfg.kernel
        g, sc = cfg.shape_grid, cfg.shape_channels
        h1, h2 = cfg.hidden
        self.shape_mlp = nn.Sequential(
            nn.Linear(2, h1), act(), nn.Linear(h1, h2), act(), nn.Linear(h2, sc * g * g)
        )
        self.shape_conv = nn.Sequential(
            _conv(sc, c1, k), act(), _conv(c1, c1, k), act(), _conv(c1, c1, k), act()
        )
        self.state_conv = nn.Sequential(
            _conv(3, c1, k), act(), _conv(c1, c2, k), act(), _conv(c2, c3, k), act()
        )
        d = cfg.fusion_dilations
        self.fusion = nn.Sequential(
            _conv(c3 + 1 + c1, c3, k, d[0]), act(),
            _conv(c3, c3, k, d[1]), act(),
            _conv(c3, c3, k, d[2]), act(),
            _conv(c3, c2, k, d[3]), act(),
            _conv(c2, 1, k, d[4]),
        )  # fmt: skip
        if cfg.zero_head:
            nn.init.zeros_(self.fusion[-1].weight)
            nn.init.zeros_(self.fusion[-1].bias)

    def forward(self, patch: torch.Tensor, shape_params: torch.Tensor) -> torch.Tensor:
        """patch [B, P, P] in mm; shape_params [B, 2] normalized -> delta [B, P, P] in mm."""
        cfg = self.cfg
        b, p, _ = patch.shape
        if p != cfg.patch_side or patch.shape[2] != cfg.patch_side:
            raise ModelError(f"patch {tuple(patch.shape[1:])} does not match patch_side {cfg.patch_side}")
        g = cfg.shape_grid
        enc = self.shape_mlp(shape_params).view(b, cfg.shape_channels, g, g)
        enc = F.interpolate(enc, size=(p, p), mode="bilinear", align_corners=False)
        enc = self.shape_conv(enc)
        rel = patch - patch.mean(dim=(1, 2), keepdim=True)
        gx, gy = spatial_gradient_t(patch, cfg.cell_size)
        state = torch.stack([rel / cfg.depth_scale, gx, gy], dim=1)
        feats = self.state_conv(state)
        out = self.fusion(torch.cat([feats, state[:, :1], enc], dim=1))
        return out[:, 0] * cfg.depth_scale


def build_net(cfg: ModelConfig) -> DeformNet:
    """Fresh network initialised from ``cfg.seed`` without disturbing global RNG state."""
    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed)
        return DeformNet(cfg)


@dataclass
class DynamicsModel:
    config: ModelConfig
    net: DeformNet = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.net is None:
            self.net = build_net(self.config)
        self.net.eval()

    @property
    def dtype(self):
        return next(self.net.parameters()).dtype

    def to(self, dtype) -> "DynamicsModel":
        """Copy with parameters cast to ``dtype``."""
        clone = DynamicsModel(self.config, build_net(self.config), dict(self.meta))
        clone.net.load_state_dict(self.net.state_dict())
        clone.net.to(dtype)
        clone.net.eval()
        return clone

    def parameters_numpy(self) -> dict[str, np.ndarray]:
        return {k: v.detach().cpu().numpy().copy() for k, v in self.net.state_dict().items()}


def forward_canonical(model: DynamicsModel, patch, l, z) -> torch.Tensor:
    """Predicted canonical delta (mm) for normalized shape scalars ``l``, ``z``.

    Accepts a single [P, P] patch or a batch; differentiable in the patch, the
    scalars and the network parameters.
    """
    dt = model.dtype
    patch = torch.as_tensor(patch, dtype=dt)
    single = patch.dim() == 2
    if single:
        patch = patch.unsqueeze(0)
    l = torch.as_tensor(l, dtype=dt).reshape(-1)
    z = torch.as_tensor(z, dtype=dt).reshape(-1)
    params = torch.stack(torch.broadcast_tensors(l, z), dim=-1).expand(patch.shape[0], 2)
    out = model.net(patch, params)
    return out[0] if single else out


def placed_delta_t(model: DynamicsModel, states: torch.Tensor, actions: torch.Tensor, cell_size: float) -> torch.Tensor:
    """Model delta warped back into field coordinates for a batch.

    states [B, H, W] in mm, actions [B, 5] physical (x, y, theta, l_or_c, z).
    """
    cfg = model.config
    h, w = states.shape[-2:]
    pose = actions[:, :3]
    patch = warp_to_canonical(states, pose, cell_size, cfg.patch_side, cfg.anchor)
    shape = torch.stack([actions[:, 3] / cfg.shape_scale, actions[:, 4] / cfg.depth_scale], dim=-1)
    delta = model.net(patch, shape)
    return warp_from_canonical(delta, pose, (h, w), cell_size, cfg.anchor)


def step_t(model: DynamicsModel, states: torch.Tensor, actions: torch.Tensor, cell_size: float, d_max: float) -> torch.Tensor:
    """One differentiable model step, clamped to the physical depth range."""
    return torch.clamp(states + placed_delta_t(model, states, actions, cell_size), 0.0, d_max)


def rollout_t(model, start: torch.Tensor, actions: torch.Tensor, cell_size: float, d_max: float) -> torch.Tensor:
    """Apply action sequences [B, N, 5] from a shared start [H, W]; returns [B, H, W]."""
    b = actions.shape[0]
    state = start.expand(b, *start.shape[-2:])
    for i in range(actions.shape[1]):
        state = step_t(model, state, actions[:, i], cell_size, d_max)
    return state


def predicted_delta(model: DynamicsModel, state: HeightField, action: Action) -> np.ndarray:
    """Canonical-frame delta the model predicts for ``action`` on ``state``."""
    cfg = model.config
    s = torch.tensor(state.depths, dtype=model.dtype).unsqueeze(0)
    a = torch.as_tensor(action_to_vector(action), dtype=model.dtype).unsqueeze(0)
    with torch.no_grad():
        patch = warp_to_canonical(s, a[:, :3], state.cell_size, cfg.patch_side, cfg.anchor)
        shape = torch.stack([a[:, 3] / cfg.shape_scale, a[:, 4] / cfg.depth_scale], dim=-1)
        return model.net(patch, shape)[0].double().numpy()


def predict(model: DynamicsModel, state: HeightField, action: Action) -> HeightField:
    """Next state: ``state`` plus the model's delta placed at the action pose."""
    if action.kind != model.config.kind:
        raise ModelError(f"model predicts {model.config.kind} actions, got {action.kind}")
    s = torch.tensor(state.depths, dtype=model.dtype).unsqueeze(0)
    a = torch.as_tensor(action_to_vector(action), dtype=model.dtype).unsqueeze(0)
    with torch.no_grad():
        delta = placed_delta_t(model, s, a, state.cell_size)[0].double().numpy()
    return state.with_depths(state.depths + delta, clip=True)
