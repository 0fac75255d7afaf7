from __future__ import annotations

import math
from dataclasses import dataclass, asdict, replace

import numpy as np


class PresetError(KeyError):
    pass


@dataclass(frozen=True)
class MaterialSpec:
    """Parameters of the synthetic deformation rule.

    plasticity: fraction of the displaced volume pushed into ridges (the rest compacts).
    ridge_sigma: Gaussian spread of the ridge in mm.
    repose_tangent: steepest stable slope; ``inf`` disables granular relaxation.
    elastic_rebound: fraction of each indentation that springs back.
    noise_sigma: std of the additive scan noise in mm.
    """

    name: str
    plasticity: float
    ridge_sigma: float
    repose_tangent: float = math.inf
    elastic_rebound: float = 0.0
    noise_sigma: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.plasticity <= 1.0:
            raise ValueError(f"plasticity {self.plasticity} outside [0, 1]")
        if not 0.0 <= self.elastic_rebound < 1.0:
            raise ValueError(f"elastic_rebound {self.elastic_rebound} outside [0, 1)")
        if not self.repose_tangent > 0:
            raise ValueError("repose_tangent must be positive")
        if self.ridge_sigma <= 0 or self.noise_sigma < 0:
            raise ValueError("ridge_sigma must be positive and noise_sigma non-negative")

    @property
    def granular(self) -> bool:
        return math.isfinite(self.repose_tangent)

    def with_(self, **changes) -> "MaterialSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        if not self.granular:
            d["repose_tangent"] = None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MaterialSpec":
        d = dict(d)
        if d.get("repose_tangent") is None:
            d["repose_tangent"] = math.inf
        return cls(**d)


MATERIALS = {
    "foam": MaterialSpec("foam", plasticity=0.6, ridge_sigma=4.0, elastic_rebound=0.15),
    "dough": MaterialSpec("dough", plasticity=0.9, ridge_sigma=6.0, elastic_rebound=0.02),
    "sand": MaterialSpec("sand", plasticity=0.3, ridge_sigma=2.0, repose_tangent=0.7),
}


@dataclass(frozen=True)
class ToolProfile:
    """End-effector geometry.

    ``radius`` is the lateral half-width in mm. Offsets are how far above the
    tool tip each point of the contact surface sits; compliance raises the rim
    so a soft tool indents less at its edges. Gripper tools press two mirrored
    jaws that start ``opening`` mm apart.
    """

    name: str
    shape: str = "rod"
    radius: float = 6.0
    compliance: float = 0.0
    mode: str = "single-tip"
    opening: float = 40.0

    def __post_init__(self):
        if self.shape not in ("rod", "bar", "wedge"):
            raise ValueError(f"unknown tool shape {self.shape!r}")
        if self.mode not in ("single-tip", "gripper-pair"):
            raise ValueError(f"unknown tool mode {self.mode!r}")
        if not 0.0 <= self.compliance <= 1.0:
            raise ValueError(f"compliance {self.compliance} outside [0, 1]")
        if self.radius <= 0 or self.opening <= 0:
            raise ValueError("radius and opening must be positive")

    @property
    def reach(self) -> float:
        """Largest distance from the tip centre covered by the contact surface."""
        if self.shape == "rod":
            return self.radius
        half_u = self.radius / 3 if self.shape == "bar" else self.radius / 2
        return math.hypot(half_u, self.radius)

    def offsets(self, u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Contact-surface height above the tip at tool-frame points (u along travel)."""
        r = self.radius
        if self.shape == "rod":
            rho2 = u * u + v * v
            inside = rho2 <= r * r
            off = r - np.sqrt(np.clip(r * r - rho2, 0.0, None))
        elif self.shape == "bar":
            inside = (np.abs(u) <= r / 3) & (np.abs(v) <= r)
            off = np.zeros_like(u)
        else:
            inside = (np.abs(u) <= r / 2) & (np.abs(v) <= r)
            off = np.abs(v)
        if self.compliance:
            rho = np.minimum(np.sqrt(u * u + v * v) / r, 1.0)
            off = off + self.compliance * 0.5 * r * rho**2
        return off, inside

    def footprint(self, cell_size: float) -> np.ndarray:
        """Offset stamp sampled on the cell grid at theta = 0; NaN outside the tool."""
        n = int(math.ceil(self.reach / cell_size))
        c = np.arange(-n, n + 1) * cell_size
        v, u = np.meshgrid(c, c, indexing="ij")
        off, inside = self.offsets(u, v)
        return np.where(inside, off, np.nan)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ToolProfile":
        return cls(**d)


TOOLS = {
    "rod": ToolProfile("rod", "rod", radius=6.0),
    "soft_rod": ToolProfile("soft_rod", "rod", radius=6.0, compliance=0.5),
    "bar": ToolProfile("bar", "bar", radius=8.0),
    "wedge": ToolProfile("wedge", "wedge", radius=6.0),
    "gripper": ToolProfile("gripper", "bar", radius=8.0, mode="gripper-pair", opening=40.0),
}


def get_material(name: str) -> MaterialSpec:
    try:
        return MATERIALS[name]
    except KeyError:
        raise PresetError(f"unknown material preset {name!r}; choose from {sorted(MATERIALS)}") from None


def get_tool(name: str) -> ToolProfile:
    try:
        return TOOLS[name]
    except KeyError:
        raise PresetError(f"unknown tool preset {name!r}; choose from {sorted(TOOLS)}") from None
