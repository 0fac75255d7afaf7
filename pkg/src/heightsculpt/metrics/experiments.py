"""Experiment harnesses: cross-material transfer, sample efficiency, action noise."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from ..actions import ActionBounds, TWO_PI, project_units, shape_max
from ..dynamics.model import DynamicsModel, ModelConfig
from ..dynamics.train import train
from ..field import HeightField, flat_field
from ..planning.objective import PlanObjective, rollout_losses_t
from ..planning.optimize import Plan
from ..sim.dataset import Dataset, generate_dataset
from ..sim.materials import MaterialSpec, ToolProfile, get_material, get_tool
from .evaluate import MetricReport, eval_model

log = logging.getLogger(__name__)


@dataclass
class TrainSettings:
    """Shared knobs for the harnesses' model fits."""

    model: ModelConfig = field(default_factory=lambda: ModelConfig(channels=(8, 16, 16)))
    objective: str = "3d"
    epochs: int = 30
    lr: float = 3e-3
    batch_size: int = 16
    seed: int = 0


def _fit(ds: Dataset, st: TrainSettings) -> DynamicsModel:
    cfg = ModelConfig.from_dict(dict(st.model.to_dict(), kind=ds.kind))
    model, _ = train(DynamicsModel(cfg), ds, st.objective, st.epochs, st.lr, st.seed, st.batch_size)
    return model


def _resolve(material, tool):
    m = get_material(material) if isinstance(material, str) else material
    t = get_tool(tool) if isinstance(tool, str) else tool
    return m, t


def _data_seeds(seed: int) -> tuple[int, int]:
    train_ss, test_ss = np.random.SeedSequence(seed).spawn(2)
    return int(train_ss.generate_state(1)[0]), int(test_ss.generate_state(1)[0])


@dataclass
class CrossMaterialResult:
    materials: list[str]
    matrix: np.ndarray  # rows: training material, columns: test material (L_3D)
    reports: dict = field(default_factory=dict)


def cross_material_matrix(
    materials,
    tool: str | ToolProfile = "rod",
    n_train: int = 300,
    n_test: int = 40,
    seed: int = 0,
    settings: TrainSettings | None = None,
    start: HeightField | None = None,
) -> CrossMaterialResult:
    """Train one model per material and evaluate each on every material's test set."""
    st = settings or TrainSettings()
    start = start or flat_field()
    tr_seed, te_seed = _data_seeds(seed)
    names, tests, models = [], {}, {}
    for mat in materials:
        m, t = _resolve(mat, tool)
        names.append(m.name)
        ps = st.model.patch_side
        train_ds = generate_dataset(start, n_train, m, t, tr_seed, patch_side=ps)
        tests[m.name] = generate_dataset(start, n_test, m, t, te_seed, patch_side=ps)
        models[m.name] = _fit(train_ds, st)
    mat = np.zeros((len(names), len(names)))
    reports = {}
    for i, a in enumerate(names):
        for j, b in enumerate(names):
            rep = eval_model(models[a], tests[b], clouds=False)
            mat[i, j] = rep.l_3d
            reports[a, b] = rep
    return CrossMaterialResult(names, mat, reports)


@dataclass
class SweepPoint:
    size: int
    epochs: int
    report: MetricReport


def sample_efficiency_sweep(
    sizes,
    material: str | MaterialSpec = "foam",
    tool: str | ToolProfile = "rod",
    seed: int = 0,
    n_test: int = 40,
    step_budget: int = 600,
    settings: TrainSettings | None = None,
    start: HeightField | None = None,
) -> list[SweepPoint]:
    """Held-out L_3D against training-set size.

    Smaller sets are prefixes of the largest one, all runs share one test set,
    and each run gets the same number of optimizer steps (so small sets train
    for more epochs).
    """
    st = settings or TrainSettings()
    start = start or flat_field()
    m, t = _resolve(material, tool)
    tr_seed, te_seed = _data_seeds(seed)
    sizes = sorted(int(s) for s in sizes)
    ps = st.model.patch_side
    full = generate_dataset(start, sizes[-1], m, t, tr_seed, patch_side=ps)
    test = generate_dataset(start, n_test, m, t, te_seed, patch_side=ps)
    points = []
    for n in sizes:
        ds = full.subset(range(n))
        n_train = n - int(round(n * 0.1)) if n > 1 else 1
        epochs = max(1, math.ceil(step_budget / math.ceil(n_train / st.batch_size)))
        model = _fit(ds, TrainSettings(st.model, st.objective, epochs, st.lr, st.batch_size, st.seed))
        points.append(SweepPoint(n, epochs, eval_model(model, test, clouds=False)))
        log.info("size %d: L_3D %.4g", n, points[-1].report.l_3d)
    return points


@dataclass
class NoiseRow:
    sigma: float
    loss_3d: float
    loss_viz: float
    std_3d: float
    std_viz: float


@dataclass
class NoiseSweepResult:
    rows: list[NoiseRow]
    baseline_3d: float  # losses of taking no action at all
    baseline_viz: float

    def crossover(self, which: str) -> float:
        """Smallest sigma whose mean loss exceeds the no-action baseline (inf if none)."""
        base = self.baseline_3d if which == "3d" else self.baseline_viz
        for r in self.rows:
            if (r.loss_3d if which == "3d" else r.loss_viz) > base:
                return r.sigma
        return math.inf


def noise_sweep(
    plan: Plan,
    start: HeightField,
    target: HeightField,
    model: DynamicsModel,
    sigmas,
    trials: int = 8,
    seed: int = 0,
) -> NoiseSweepResult:
    """Roll out ``plan`` with Gaussian action noise through the model.

    Noise is added in normalized parameter units (x, y, theta/2pi, l/l_max,
    z/z_max) and the result projected back into bounds. Reported losses are
    unweighted L_3D and L_viz against ``target``.
    """
    rng = np.random.default_rng(seed)
    scale = np.array([1.0, 1.0, TWO_PI, shape_max(plan.kind, plan.bounds), plan.bounds.z_max])
    obj3 = PlanObjective(target, 1.0, 0.0)
    objv = PlanObjective(target, 0.0, 1.0)
    dt = model.dtype
    empty = torch.zeros((1, 0, 5), dtype=dt)
    with torch.no_grad():
        b3 = float(rollout_losses_t(model, start, obj3, empty)[0])
        bv = float(rollout_losses_t(model, start, objv, empty)[0])
    rows = []
    for sigma in sigmas:
        n = 1 if sigma == 0 else trials
        noise = rng.standard_normal((n,) + plan.units.shape)
        units = project_units(plan.units[None] + sigma * noise, plan.bounds)
        acts = torch.as_tensor(units * scale, dtype=dt)
        with torch.no_grad():
            l3 = rollout_losses_t(model, start, obj3, acts).double().numpy()
            lv = rollout_losses_t(model, start, objv, acts).double().numpy()
        rows.append(NoiseRow(float(sigma), float(l3.mean()), float(lv.mean()), float(l3.std()), float(lv.std())))
    return NoiseSweepResult(rows, b3, bv)
