"""Push and pinch actions plus their normalized [0, 1]^5 parameterization."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

TWO_PI = 2.0 * math.pi


class ActionError(ValueError):
    pass


@dataclass(frozen=True)
class ActionBounds:
    """Hyper-parameter limits of the action space.

    ``xy_lo``/``xy_hi`` restrict where samplers and optimizers place action
    starts; any start in [0, 1] is still a valid action.
    """

    l_max: float = 60.0
    z_max: float = 10.0
    c_max: float = 40.0
    xy_lo: float = 0.1
    xy_hi: float = 0.9

    def __post_init__(self):
        if min(self.l_max, self.z_max, self.c_max) <= 0:
            raise ActionError("action bounds must be positive")
        if not 0.0 <= self.xy_lo < self.xy_hi <= 1.0:
            raise ActionError("need 0 <= xy_lo < xy_hi <= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PushAction:
    x: float
    y: float
    theta: float
    length: float
    depth: float

    kind = "push"

    def validate(self, bounds: ActionBounds) -> "PushAction":
        _check_pose(self.x, self.y, self.theta)
        if not 0.0 <= self.length <= bounds.l_max:
            raise ActionError(f"length {self.length} outside [0, {bounds.l_max}]")
        if not 0.0 <= self.depth <= bounds.z_max:
            raise ActionError(f"depth {self.depth} outside [0, {bounds.z_max}]")
        return self

    @property
    def shape_params(self) -> tuple[float, float]:
        return self.length, self.depth

    def to_dict(self) -> dict:
        return {
            "kind": "push",
            "x": self.x,
            "y": self.y,
            "theta": self.theta,
            "length_mm": self.length,
            "depth_mm": self.depth,
        }


@dataclass(frozen=True)
class PinchAction:
    x: float
    y: float
    theta: float
    close_dist: float
    depth: float

    kind = "pinch"

    def validate(self, bounds: ActionBounds) -> "PinchAction":
        _check_pose(self.x, self.y, self.theta)
        if not 0.0 <= self.close_dist <= bounds.c_max:
            raise ActionError(f"close_dist {self.close_dist} outside [0, {bounds.c_max}]")
        if not 0.0 <= self.depth <= bounds.z_max:
            raise ActionError(f"depth {self.depth} outside [0, {bounds.z_max}]")
        return self

    @property
    def shape_params(self) -> tuple[float, float]:
        return self.close_dist, self.depth

    def to_dict(self) -> dict:
        return {
            "kind": "pinch",
            "x": self.x,
            "y": self.y,
            "theta": self.theta,
            "close_dist_mm": self.close_dist,
            "depth_mm": self.depth,
        }


Action = PushAction | PinchAction


def _check_pose(x, y, theta):
    vals = (x, y, theta)
    if not all(math.isfinite(v) for v in vals):
        raise ActionError(f"non-finite action pose {vals}")
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise ActionError(f"start ({x}, {y}) outside the unit workspace")
    if not 0.0 <= theta < TWO_PI:
        raise ActionError(f"theta {theta} outside [0, 2pi)")


def wrap_angle(theta: float) -> float:
    t = float(theta) % TWO_PI
    return 0.0 if t >= TWO_PI else t


def action_from_dict(d: dict) -> Action:
    kind = d.get("kind", "push")
    if kind == "push":
        return PushAction(d["x"], d["y"], d["theta"], d["length_mm"], d["depth_mm"])
    if kind == "pinch":
        return PinchAction(d["x"], d["y"], d["theta"], d["close_dist_mm"], d["depth_mm"])
    raise ActionError(f"unknown action kind {kind!r}")


def shape_max(kind: str, bounds: ActionBounds) -> float:
    return bounds.l_max if kind == "push" else bounds.c_max


def action_to_vector(action: Action) -> np.ndarray:
    """Physical parameter row (x, y, theta, l_or_c, z)."""
    return np.array([action.x, action.y, action.theta, action.shape_params[0], action.depth])


def vector_to_action(v, kind: str = "push") -> Action:
    x, y, th, s, z = (float(t) for t in v)
    th = wrap_angle(th)
    if kind == "push":
        return PushAction(x, y, th, s, z)
    return PinchAction(x, y, th, s, z)


def normalize(vecs: np.ndarray, bounds: ActionBounds, kind: str = "push") -> np.ndarray:
    """Physical rows -> unit rows (x, y, theta/2pi, l/l_max, z/z_max)."""
    vecs = np.asarray(vecs, dtype=np.float64)
    scale = np.array([1.0, 1.0, TWO_PI, shape_max(kind, bounds), bounds.z_max])
    return vecs / scale


def denormalize(units: np.ndarray, bounds: ActionBounds, kind: str = "push") -> np.ndarray:
    units = np.asarray(units, dtype=np.float64)
    scale = np.array([1.0, 1.0, TWO_PI, shape_max(kind, bounds), bounds.z_max])
    return units * scale


def project_units(units: np.ndarray, bounds: ActionBounds) -> np.ndarray:
    """Clamp unit parameters to the feasible box; theta wraps instead."""
    u = np.array(units, dtype=np.float64, copy=True)
    u[..., 0:2] = np.clip(u[..., 0:2], bounds.xy_lo, bounds.xy_hi)
    u[..., 2] = np.mod(u[..., 2], 1.0)
    u[..., 2][u[..., 2] >= 1.0] = 0.0
    u[..., 3:5] = np.clip(u[..., 3:5], 0.0, 1.0)
    return u


def sample_units(rng: np.random.Generator, n: int, bounds: ActionBounds) -> np.ndarray:
    """Uniform unit-parameter rows; starts confined to the configured workspace."""
    u = rng.random((n, 5))
    u[:, 0:2] = bounds.xy_lo + (bounds.xy_hi - bounds.xy_lo) * u[:, 0:2]
    return u
