"""Execute-and-replan sculpting loop against a ground-truth world."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from ..actions import Action, ActionBounds
from ..dynamics.losses import loss_3d, loss_viz
from ..dynamics.model import DynamicsModel, predict
from ..field import HeightField
from ..io import write_hfd_array
from ..sim.materials import MaterialSpec, ToolProfile
from ..sim.oracle import apply_action, scan
from ..warp import canonical_values
from .goal import GoalSpec
from .objective import PlanObjective, rollout_losses_t
from .optimize import Plan, PlanError, evaluate_plan, greedy_init, refine

log = logging.getLogger(__name__)


class OracleWorld:
    """The simulated material: executes actions and returns fresh scans.

    ``state`` is the physical surface and never sees sensor noise; only the
    scans handed back to the planner are noisy.
    """

    def __init__(self, state: HeightField, material: MaterialSpec, tool: ToolProfile, seed: int = 0, bounds: ActionBounds | None = None):
        self.state = state
        self.material = material
        self._physical = material.with_(noise_sigma=0.0)
        self.tool = tool
        self.bounds = bounds or ActionBounds()
        self._ss = np.random.SeedSequence(seed)
        self.steps = 0

    def _seed(self) -> int:
        return int(self._ss.spawn(1)[0].generate_state(1)[0])

    def execute(self, action: Action) -> HeightField:
        """Apply ``action`` and return a scan of the result."""
        self.state = apply_action(self.state, action, self._physical, self.tool, self._seed(), self.bounds)
        self.steps += 1
        return self.scan()

    def scan(self) -> HeightField:
        return scan(self.state, self.material, self._seed())


@dataclass
class MPCConfig:
    n_actions: int = 40
    chunk: int = 5
    trials: int = 64
    iters: int = 100
    method: str = "gd"
    w_3d: float = 1.0
    w_viz: float = 1.0
    lr: float = 0.01
    reinit: bool = False  # rerun greedy init at each replan instead of refining the tail
    seed: int = 0


@dataclass
class ExecutionLog:
    records: list = field(default_factory=list)
    initial_loss_3d: float = float("nan")
    initial_loss_viz: float = float("nan")
    final_state: HeightField | None = None
    phases: int = 0
    error: str | None = None

    @property
    def actions(self) -> list[dict]:
        return [r["action"] for r in self.records]

    @property
    def final_loss_3d(self) -> float:
        return self.records[-1]["post_loss_3d"] if self.records else self.initial_loss_3d

    @property
    def final_loss_viz(self) -> float:
        return self.records[-1]["post_loss_viz"] if self.records else self.initial_loss_viz

    def write_jsonl(self, path) -> None:
        with open(path, "w") as f:
            for r in self.records:
                f.write(json.dumps(r, sort_keys=True) + "\n")


def _plan(remaining, prev, state, objective, model, cfg, phase, bounds, kind):
    seed = cfg.seed * 1000 + phase
    if prev is None or cfg.reinit:
        plan = greedy_init(remaining, state, objective, model, cfg.trials, seed, bounds, kind)
    else:
        plan = prev
    return refine(plan, state, objective, model, cfg.method, cfg.iters, seed, lr=cfg.lr)


def mpc_sculpt(
    start: HeightField,
    goal: GoalSpec,
    model: DynamicsModel,
    world: OracleWorld,
    cfg: MPCConfig | None = None,
    out_dir: str | None = None,
    kind: str | None = None,
) -> ExecutionLog:
    """Plan all remaining actions, execute ``chunk`` of them, rescan, repeat.

    ``start`` is only used for the shape check; every planning phase starts
    from a fresh world scan. With ``out_dir`` the canonical predicted/actual
    patches of each step are written as HFD files next to ``log.jsonl``.
    """
    cfg = cfg or MPCConfig()
    if not cfg.n_actions >= cfg.chunk >= 1:
        raise PlanError(f"need n_actions >= chunk >= 1, got {cfg.n_actions}, {cfg.chunk}")
    if goal.target.shape != start.shape:
        raise PlanError("goal and start differ in shape")
    kind = kind or model.config.kind
    bounds = world.bounds
    target = goal.target
    objective = PlanObjective(target, cfg.w_3d, cfg.w_viz)
    patch_dir = None
    if out_dir is not None:
        patch_dir = os.path.join(out_dir, "patches")
        os.makedirs(patch_dir, exist_ok=True)

    elog = ExecutionLog()
    state = world.scan()
    elog.initial_loss_3d = loss_3d(state, target)
    elog.initial_loss_viz = loss_viz(state, target)
    plan: Plan | None = None
    step = 0
    while step < cfg.n_actions:
        remaining = cfg.n_actions - step
        plan = _plan(remaining, plan, state, objective, model, cfg, elog.phases, bounds, kind)
        elog.phases += 1
        idle = evaluate_plan(plan, state, objective, model) >= _idle_value(state, objective, model)
        n_exec = min(cfg.chunk, remaining)
        for action in plan.actions[:n_exec]:
            pre3, prev = loss_3d(state, target), loss_viz(state, target)
            predicted = predict(model, state, action)
            try:
                actual = world.execute(action)  # the post-action scan
            except Exception as e:  # keep the partial log
                elog.error = f"{type(e).__name__}: {e}"
                log.error("world execution failed at step %d: %s", step, elog.error)
                elog.final_state = state
                _flush(elog, out_dir)
                return elog
            rec = {
                "step": step,
                "action": action.to_dict(),
                "pre_loss_3d": pre3,
                "pre_loss_viz": prev,
                "post_loss_3d": loss_3d(actual, target),
                "post_loss_viz": loss_viz(actual, target),
                "predicted_loss_3d": loss_3d(predicted, target),
                "predicted_loss_viz": loss_viz(predicted, target),
                "no_improvement": bool(idle),
                "predicted_patch_path": None,
                "actual_patch_path": None,
            }
            if patch_dir is not None:
                side = model.config.patch_side
                for tag, fld in (("predicted", predicted), ("actual", actual)):
                    name = f"step{step:03d}_{tag}.hfd"
                    write_hfd_array(os.path.join(patch_dir, name), canonical_values(fld.depths, fld.cell_size, action, side), fld.cell_size, fld.d_max)
                    rec[f"{tag}_patch_path"] = os.path.join("patches", name)
            elog.records.append(rec)
            state = actual
            step += 1
        plan = plan.tail(n_exec) if step < cfg.n_actions else None
    elog.final_state = state
    _flush(elog, out_dir)
    return elog


def _idle_value(state, objective, model):
    """Objective of executing nothing from ``state``, at the model's precision."""
    with torch.no_grad():
        empty = torch.zeros((1, 0, 5), dtype=model.dtype)
        return float(rollout_losses_t(model, state, objective, empty)[0])


def _flush(elog, out_dir):
    if out_dir is not None:
        elog.write_jsonl(os.path.join(out_dir, "log.jsonl"))
