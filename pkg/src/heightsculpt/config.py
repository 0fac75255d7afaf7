"""Run configuration shared by every command; JSON round-trippable."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .actions import ActionBounds
from .dynamics.model import ModelConfig
from .field import DEFAULT_D_MAX, DEFAULT_GRID, DEFAULT_SURFACE, WORKSPACE_MM
from .sim.materials import MATERIALS, TOOLS


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    objective: str = "3d"
    epochs: int = 30
    lr: float = 3e-3
    batch_size: int = 16
    decay: float = 0.5


@dataclass
class PlannerConfig:
    n_actions: int = 40
    chunk: int = 5
    trials: int = 64
    iters: int = 30
    refiner: str = "gd"
    lr: float = 0.01
    w_3d: float = 1.0
    w_viz: float = 1.0
    goal_weights: tuple[float, float, float] = (1.0, 10.0, 0.1)
    reinit: bool = False


@dataclass
class RunConfig:
    grid: int = DEFAULT_GRID
    cell_size: float | None = None  # None: workspace / grid
    d_max: float = DEFAULT_D_MAX
    surface: float = DEFAULT_SURFACE
    l_max: float = 60.0
    z_max: float = 10.0
    c_max: float = 40.0
    material: str = "foam"
    tool: str = "rod"
    samples: int = 300
    model: dict = field(default_factory=lambda: ModelConfig(channels=(8, 16, 16)).to_dict())
    train: TrainConfig = field(default_factory=TrainConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    seed: int = 0
    out_dir: str = "out"

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if isinstance(self.planner, dict):
            self.planner = PlannerConfig(**self.planner)
        self.planner.goal_weights = tuple(float(w) for w in self.planner.goal_weights)
        self.validate()

    def validate(self) -> "RunConfig":
        if self.grid < 4:
            raise ConfigError(f"grid must be at least 4 cells, got {self.grid}")
        positives = dict(d_max=self.d_max, l_max=self.l_max, z_max=self.z_max, c_max=self.c_max)
        if self.cell_size is not None:
            positives["cell_size"] = self.cell_size
        for k, v in positives.items():
            if not v > 0:
                raise ConfigError(f"{k} must be positive, got {v}")
        if not 0 <= self.surface <= self.d_max:
            raise ConfigError("surface must lie within [0, d_max]")
        if self.material not in MATERIALS:
            raise ConfigError(f"unknown material preset {self.material!r}; have {sorted(MATERIALS)}")
        if self.tool not in TOOLS:
            raise ConfigError(f"unknown tool preset {self.tool!r}; have {sorted(TOOLS)}")
        if self.train.objective not in ("3d", "3d+viz"):
            raise ConfigError(f"unknown training objective {self.train.objective!r}")
        if self.planner.refiner not in ("gd", "cem"):
            raise ConfigError(f"unknown refiner {self.planner.refiner!r}")
        if not self.planner.n_actions >= self.planner.chunk >= 1:
            raise ConfigError("need planner n_actions >= chunk >= 1")
        try:
            ModelConfig.from_dict(self.model)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad model config: {e}") from e
        return self

    @property
    def bounds(self) -> ActionBounds:
        return ActionBounds(self.l_max, self.z_max, self.c_max)

    @property
    def resolved_cell_size(self) -> float:
        return self.cell_size if self.cell_size is not None else float(np.float32(WORKSPACE_MM / self.grid))

    def model_config(self, kind: str = "push") -> ModelConfig:
        d = dict(self.model, kind=kind, cell_size=self.resolved_cell_size, depth_scale=self.z_max)
        d["shape_scale"] = self.l_max if kind == "push" else self.c_max
        return ModelConfig.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["planner"]["goal_weights"] = list(self.planner.goal_weights)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
