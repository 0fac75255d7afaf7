"""Greedy action initialization and GD / CEM plan refinement."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from ..actions import ActionBounds, Action, TWO_PI, project_units, sample_units, vector_to_action, shape_max
from ..dynamics.model import DynamicsModel, step_t
from ..field import HeightField
from .objective import PlanObjective, rollout_losses_t, state_loss_t

log = logging.getLogger(__name__)


class PlanError(RuntimeError):
    pass


@dataclass
class Plan:
    units: np.ndarray  # [N, 5] normalized parameters
    kind: str = "push"
    bounds: ActionBounds = field(default_factory=ActionBounds)
    w_3d: float = 1.0
    w_viz: float = 1.0
    exec_chunk: int = 5
    seed: int = 0
    objective: float = float("nan")
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.units = np.asarray(self.units, dtype=np.float64).reshape(-1, 5)
        if len(self.units) < 1:
            raise PlanError("a plan needs at least one action")

    def __len__(self):
        return len(self.units)

    @property
    def vectors(self) -> np.ndarray:
        return self.units * _scale(self.kind, self.bounds)

    @property
    def actions(self) -> list[Action]:
        return [vector_to_action(v, self.kind) for v in self.vectors]

    def tail(self, start: int) -> "Plan":
        return replace(self, units=self.units[start:].copy(), history=[])


def _scale(kind, bounds):
    return np.array([1.0, 1.0, TWO_PI, shape_max(kind, bounds), bounds.z_max])


def _to_physical(units: torch.Tensor, kind, bounds) -> torch.Tensor:
    return units * torch.as_tensor(_scale(kind, bounds), dtype=units.dtype)


def _check(val, what):
    if not np.all(np.isfinite(val)):
        raise PlanError(f"non-finite planning objective during {what}")


def greedy_init(
    n_actions: int,
    start: HeightField,
    objective: PlanObjective,
    model: DynamicsModel,
    trials: int = 64,
    seed: int = 0,
    bounds: ActionBounds | None = None,
    kind: str | None = None,
) -> Plan:
    """Choose each slot as the best of ``trials`` uniform candidates given the prefix."""
    if n_actions < 1 or trials < 1:
        raise PlanError("need n_actions >= 1 and trials >= 1")
    bounds = bounds or ActionBounds()
    kind = kind or model.config.kind
    rng = np.random.default_rng(seed)
    dt = model.dtype
    cs, d_max = start.cell_size, start.d_max
    tgt = torch.as_tensor(np.array(objective.target.depths), dtype=dt)
    state = torch.as_tensor(np.array(start.depths), dtype=dt).unsqueeze(0)
    chosen, best_val = [], float("nan")
    with torch.no_grad():
        for _ in range(n_actions):
            cand = sample_units(rng, trials, bounds)
            phys = _to_physical(torch.as_tensor(cand, dtype=dt), kind, bounds)
            nxt = step_t(model, state.expand(trials, *state.shape[1:]), phys, cs, d_max)
            vals = state_loss_t(nxt, objective, tgt).double().numpy()
            _check(vals, "greedy initialization")
            i = int(np.argmin(vals))  # first minimum: lowest index wins ties
            chosen.append(cand[i])
            best_val = float(vals[i])
            state = nxt[i : i + 1]
    return Plan(np.array(chosen), kind, bounds, objective.w_3d, objective.w_viz, seed=seed, objective=best_val)


def evaluate_plan(plan: Plan, start: HeightField, objective: PlanObjective, model: DynamicsModel) -> float:
    with torch.no_grad():
        u = torch.as_tensor(plan.units, dtype=model.dtype).unsqueeze(0)
        return float(rollout_losses_t(model, start, objective, _to_physical(u, plan.kind, plan.bounds))[0])


def _refine_gd(plan, start, objective, model, iters, lr):
    dt = model.dtype
    u = torch.tensor(plan.units, dtype=dt, requires_grad=True)
    opt = torch.optim.Adam([u], lr=lr)
    best_u, best = plan.units.copy(), np.inf
    hist = []
    for it in range(iters + 1):
        loss = rollout_losses_t(model, start, objective, _to_physical(u, plan.kind, plan.bounds).unsqueeze(0))[0]
        val = float(loss.detach())
        _check(val, "gradient refinement")
        hist.append(val)
        if val < best:
            best, best_u = val, u.detach().double().numpy().copy()
        if it == iters:
            break
        opt.zero_grad()
        loss.backward()
        opt.step()
        with torch.no_grad():
            u.copy_(torch.as_tensor(project_units(u.detach().double().numpy(), plan.bounds), dtype=dt))
    return best_u, best, hist


def _refine_cem(plan, start, objective, model, iters, seed, population, elite_frac, init_std):
    rng = np.random.default_rng(seed)
    dt = model.dtype
    n_elite = max(1, int(round(population * elite_frac)))
    mean = plan.units.copy()
    std = np.full_like(mean, init_std)
    best_u = plan.units.copy()
    best = evaluate_plan(plan, start, objective, model)
    hist = [best]
    for _ in range(iters):
        pop = project_units(mean + std * rng.standard_normal((population,) + mean.shape), plan.bounds)
        with torch.no_grad():
            vals = rollout_losses_t(
                model, start, objective, _to_physical(torch.as_tensor(pop, dtype=dt), plan.kind, plan.bounds)
            ).double().numpy()
        _check(vals, "CEM refinement")
        order = np.argsort(vals, kind="stable")
        if vals[order[0]] < best:
            best, best_u = float(vals[order[0]]), pop[order[0]].copy()
        elite = pop[order[:n_elite]]
        # theta is circular: average around the current mean to avoid wrap jumps
        d_th = (elite[..., 2] - mean[None, :, 2] + 0.5) % 1.0 - 0.5
        elite = elite.copy()
        elite[..., 2] = mean[None, :, 2] + d_th
        mean = elite.mean(0)
        mean[:, 2] %= 1.0
        std = np.maximum(elite.std(0), 1e-3)
        hist.append(best)
    return best_u, best, hist


def refine(
    plan: Plan,
    start: HeightField,
    objective: PlanObjective,
    model: DynamicsModel,
    method: str = "gd",
    iters: int = 100,
    seed: int = 0,
    lr: float = 0.01,
    population: int = 32,
    elite_frac: float = 0.25,
    init_std: float = 0.05,
) -> Plan:
    """Improve ``plan``; returns the best plan seen, never worse than the input."""
    if method not in ("gd", "cem"):
        raise PlanError(f"unknown refinement method {method!r}")
    if iters <= 0:
        return plan
    base = evaluate_plan(plan, start, objective, model)
    if method == "gd":
        u, val, hist = _refine_gd(plan, start, objective, model, iters, lr)
    else:
        u, val, hist = _refine_cem(plan, start, objective, model, iters, seed, population, elite_frac, init_std)
    if not val < base:
        u, val = plan.units.copy(), base
    log.debug("%s refine: %.4g -> %.4g", method, base, val)
    return replace(plan, units=u, objective=val, history=plan.history + hist)
