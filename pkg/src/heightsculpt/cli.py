"""Command-line entry point: gen-data, train, plan, experiments."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np
import torch

from .actions import ActionError
from .config import ConfigError, RunConfig
from .dynamics.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .dynamics.model import DynamicsModel, ModelError
from .dynamics.train import TrainingError, train
from .field import FieldError, HeightField, flat_field
from .io import FormatError, read_goal, read_hfd, write_hfd
from .metrics.evaluate import eval_model
from .metrics.experiments import (
    TrainSettings,
    cross_material_matrix,
    noise_sweep,
    sample_efficiency_sweep,
)
from .metrics.report import write_csv, write_curves, write_depth_png, write_heatmap
from .planning.goal import adjust_goal
from .planning.mpc import MPCConfig, OracleWorld, mpc_sculpt
from .planning.objective import ObjectiveError, PlanObjective
from .planning.optimize import PlanError, greedy_init, refine
from .planning.tasks import glyph_goal, ridge_field
from .sim.dataset import DatasetError, generate_dataset, load_dataset
from .sim.materials import PresetError, get_material, get_tool

log = logging.getLogger("heightsculpt")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- run dirs


def make_run_dir(cfg: RunConfig, command: str, out: str | None) -> str:
    """Fresh directory for one invocation; an existing one is never reused."""
    if out is None:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        out = os.path.join(cfg.out_dir, f"{command}_{stamp}")
    path, k = out, 1
    while os.path.exists(path) and os.listdir(path):
        path = f"{out}_{k}"
        k += 1
    os.makedirs(path, exist_ok=True)
    return path


def _setup_logging(run_dir: str, verbose: bool):
    for h in list(log.handlers):
        log.removeHandler(h)
        h.close()
    fh = logging.FileHandler(os.path.join(run_dir, "run.log"), mode="w")
    fh.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(fh)
    sh = logging.StreamHandler(sys.stderr)
    sh.setFormatter(logging.Formatter("%(message)s"))
    sh.setLevel(logging.INFO if verbose else logging.WARNING)
    log.addHandler(sh)
    log.setLevel(logging.INFO)


def _snapshot(run_dir: str, cfg: RunConfig, argv: list[str]):
    with open(os.path.join(run_dir, "config.json"), "w") as f:
        f.write(cfg.to_json() + "\n")
    with open(os.path.join(run_dir, "command.json"), "w") as f:
        json.dump({"argv": argv}, f, indent=1)
        f.write("\n")


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=1, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------- config


def load_config(args) -> RunConfig:
    """Config file (if any), then any flags given explicitly on the command line."""
    base = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as f:
                base = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {args.config} is not valid JSON: {e}") from e
    cfg = RunConfig.from_dict(base).to_dict()
    top = {"material": "material", "tool": "tool", "samples": "samples", "seed": "seed"}
    for flag, key in top.items():
        v = getattr(args, flag, None)
        if v is not None:
            cfg[key] = v
    train_flags = {"loss": "objective", "epochs": "epochs", "lr": "lr"}
    for flag, key in train_flags.items():
        v = getattr(args, flag, None)
        if v is not None:
            cfg["train"][key] = v
    plan_flags = {
        "actions": "n_actions", "chunk": "chunk", "w3d": "w_3d", "wviz": "w_viz",
        "refiner": "refiner", "iters": "iters", "trials": "trials",
    }  # fmt: skip
    for flag, key in plan_flags.items():
        v = getattr(args, flag, None)
        if v is not None:
            cfg["planner"][key] = v
    if getattr(args, "reinit", False):
        cfg["planner"]["reinit"] = True
    return RunConfig.from_dict(cfg)


def _start_field(cfg: RunConfig, path: str | None) -> HeightField:
    if path:
        return read_hfd(path)
    return flat_field(cfg.grid, cfg.surface, cfg.resolved_cell_size, cfg.d_max)


def _goal_field(cfg: RunConfig, goal: str | None, start: HeightField) -> HeightField:
    """A goal file path, or a built-in goal: "glyph:X" / "flat"."""
    if goal is None or goal.startswith("glyph:"):
        letter = "X" if goal is None else goal.split(":", 1)[1]
        return glyph_goal(letter, start.width, cfg.surface)
    if goal == "flat":
        return flat_field(start.width, cfg.surface, start.cell_size, start.d_max)
    return read_goal(goal, start.d_max, start.cell_size)


# ---------------------------------------------------------------- commands


def cmd_gen_data(args, cfg: RunConfig, run_dir: str) -> dict:
    start = _start_field(cfg, getattr(args, "start", None))
    ds = generate_dataset(
        start,
        cfg.samples,
        get_material(cfg.material),
        get_tool(cfg.tool),
        cfg.seed,
        bounds=cfg.bounds,
        patch_side=cfg.model_config().patch_side,
    )
    ds.save(os.path.join(run_dir, "dataset"))
    log.info("wrote %d records (hash %s)", len(ds), ds.content_hash())
    return {"records": len(ds), "data_hash": ds.content_hash()}


def cmd_train(args, cfg: RunConfig, run_dir: str) -> dict:
    ds = load_dataset(args.data)
    model = DynamicsModel(cfg.model_config(ds.kind))
    tc = cfg.train
    model, hist = train(model, ds, tc.objective, tc.epochs, tc.lr, cfg.seed, tc.batch_size, decay=tc.decay)
    save_checkpoint(os.path.join(run_dir, "model.p2d"), model)
    rows = [
        [h["epoch"], float(h["train_loss"]), float(h.get("val_loss_3d", np.nan)), float(h.get("val_loss_viz", np.nan))]
        for h in hist
    ]
    write_csv(os.path.join(run_dir, "history.csv"), ["epoch", "train_loss", "val_loss_3d", "val_loss_viz"], rows)
    out = {"epochs": tc.epochs, "objective": tc.objective, "data_hash": ds.content_hash()}
    if args.eval:
        rep = eval_model(model, load_dataset(args.eval), seed=cfg.seed)
        out["eval"] = rep.to_dict()
    return out


def _run_mpc(cfg, model, start, goal, tool_name, run_dir, seed):
    pc = cfg.planner
    mcfg = MPCConfig(pc.n_actions, pc.chunk, pc.trials, pc.iters, pc.refiner, pc.w_3d, pc.w_viz, pc.lr, pc.reinit, seed)
    world = OracleWorld(start, get_material(cfg.material), get_tool(tool_name), seed, cfg.bounds)
    return mpc_sculpt(start, goal, model, world, mcfg, out_dir=run_dir)


def cmd_plan(args, cfg: RunConfig, run_dir: str) -> dict:
    model = load_checkpoint(args.model)
    start = _start_field(cfg, args.start)
    goal = adjust_goal(_goal_field(cfg, args.goal, start), start, cfg.planner.goal_weights)
    write_hfd(os.path.join(run_dir, "goal_adjusted.hfd"), goal.target)
    tool = cfg.tool if model.config.kind == "push" else "gripper"
    elog = _run_mpc(cfg, model, start, goal, tool, run_dir, cfg.seed)
    if elog.final_state is not None:
        write_hfd(os.path.join(run_dir, "final.hfd"), elog.final_state)
        write_depth_png(os.path.join(run_dir, "final.png"), elog.final_state.depths, elog.final_state.d_max)
    steps = list(range(len(elog.records) + 1))
    l3 = [elog.initial_loss_3d] + [r["post_loss_3d"] for r in elog.records]
    lv = [elog.initial_loss_viz] + [r["post_loss_viz"] for r in elog.records]
    write_csv(os.path.join(run_dir, "losses.csv"), ["step", "loss_3d", "loss_viz"], zip(steps, l3, lv))
    summary = {
        "alpha": goal.alpha,
        "beta": goal.beta,
        "goal_degenerate": goal.degenerate,
        "initial_loss_3d": elog.initial_loss_3d,
        "initial_loss_viz": elog.initial_loss_viz,
        "final_loss_3d": elog.final_loss_3d,
        "final_loss_viz": elog.final_loss_viz,
        "executed": len(elog.records),
        "error": elog.error,
    }
    if elog.error:
        _write_json(os.path.join(run_dir, "summary.json"), summary)
        raise PlanError(f"execution stopped early: {elog.error}")
    return summary


def _settings(cfg: RunConfig) -> TrainSettings:
    tc = cfg.train
    return TrainSettings(cfg.model_config("push"), tc.objective, tc.epochs, tc.lr, tc.batch_size, cfg.seed)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as e:
        raise ConfigError(f"expected a comma-separated number list, got {text!r}") from e


def cmd_cross_material(args, cfg: RunConfig, run_dir: str) -> dict:
    mats = [m.strip() for m in args.materials.split(",") if m.strip()]
    for m in mats:
        get_material(m)
    res = cross_material_matrix(mats, cfg.tool, args.n_train, args.n_test, cfg.seed, _settings(cfg))
    rows = [[a, b, float(res.matrix[i, j])] for i, a in enumerate(res.materials) for j, b in enumerate(res.materials)]
    write_csv(os.path.join(run_dir, "cross_material.csv"), ["train_material", "test_material", "loss_3d"], rows)
    write_heatmap(os.path.join(run_dir, "cross_material.png"), res.matrix)
    return {"materials": res.materials, "matrix": res.matrix.tolist()}


def cmd_sample_efficiency(args, cfg: RunConfig, run_dir: str) -> dict:
    sizes = [int(s) for s in _floats(args.sizes)]
    if not sizes or min(sizes) < 1:
        raise ConfigError("sizes must be positive integers")
    pts = sample_efficiency_sweep(sizes, cfg.material, cfg.tool, cfg.seed, args.n_test, args.step_budget, _settings(cfg))
    rows = [[p.size, p.epochs, p.report.l_3d, p.report.l_viz] for p in pts]
    write_csv(os.path.join(run_dir, "sample_efficiency.csv"), ["n_samples", "epochs", "loss_3d", "loss_viz"], rows)
    write_curves(os.path.join(run_dir, "sample_efficiency.png"), [p.size for p in pts], [[p.report.l_3d for p in pts]])
    return {"sizes": [p.size for p in pts], "loss_3d": [p.report.l_3d for p in pts]}


def cmd_noise_sweep(args, cfg: RunConfig, run_dir: str) -> dict:
    model = load_checkpoint(args.model)
    start = _start_field(cfg, getattr(args, "start", None))
    goal = adjust_goal(_goal_field(cfg, args.goal, start), start, cfg.planner.goal_weights)
    pc = cfg.planner
    obj = PlanObjective(goal.target, pc.w_3d, pc.w_viz)
    plan = greedy_init(pc.n_actions, start, obj, model, pc.trials, cfg.seed, cfg.bounds)
    plan = refine(plan, start, obj, model, pc.refiner, pc.iters, cfg.seed, lr=pc.lr)
    res = noise_sweep(plan, start, goal.target, model, _floats(args.sigmas), args.noise_trials, cfg.seed)
    rows = [[r.sigma, r.loss_3d, r.loss_viz, r.std_3d, r.std_viz, res.baseline_3d, res.baseline_viz] for r in res.rows]
    header = ["sigma", "loss_3d", "loss_viz", "std_3d", "std_viz", "baseline_3d", "baseline_viz"]
    write_csv(os.path.join(run_dir, "noise_sweep.csv"), header, rows)
    # each curve relative to its own no-action baseline, so the crossings share the 1.0 line
    write_curves(
        os.path.join(run_dir, "noise_sweep.png"),
        [r.sigma for r in res.rows],
        [[r.loss_3d / res.baseline_3d for r in res.rows], [r.loss_viz / res.baseline_viz for r in res.rows]],
        baselines=[1.0],
    )
    return {"crossover_3d": res.crossover("3d"), "crossover_viz": res.crossover("viz")}


def cmd_pinch_vs_push(args, cfg: RunConfig, run_dir: str) -> dict:
    push = load_checkpoint(args.push_model)
    pinch = load_checkpoint(args.pinch_model)
    if push.config.kind != "push" or pinch.config.kind != "pinch":
        raise ConfigError("--push-model must be a push model and --pinch-model a pinch model")
    if args.goal == "ridge" or args.goal is None:
        start = ridge_field(cfg.grid, cfg.surface)
        target = flat_field(cfg.grid, cfg.surface, start.cell_size, start.d_max)
    else:
        start = _start_field(cfg, getattr(args, "start", None))
        target = _goal_field(cfg, args.goal, start)
    goal = adjust_goal(target, start, cfg.planner.goal_weights)
    curves, out = {}, {}
    for name, model, tool in (("push", push, cfg.tool), ("pinch", pinch, "gripper")):
        sub = os.path.join(run_dir, name)
        os.makedirs(sub, exist_ok=True)
        elog = _run_mpc(cfg, model, start, goal, tool, sub, cfg.seed)
        curves[name] = (
            [elog.initial_loss_3d] + [r["post_loss_3d"] for r in elog.records],
            [elog.initial_loss_viz] + [r["post_loss_viz"] for r in elog.records],
        )
        out[f"{name}_final_loss_3d"] = elog.final_loss_3d
        out[f"{name}_final_loss_viz"] = elog.final_loss_viz
    n = min(len(curves["push"][0]), len(curves["pinch"][0]))
    rows = [[i, curves["push"][0][i], curves["push"][1][i], curves["pinch"][0][i], curves["pinch"][1][i]] for i in range(n)]
    write_csv(
        os.path.join(run_dir, "pinch_vs_push.csv"),
        ["step", "push_loss_3d", "push_loss_viz", "pinch_loss_3d", "pinch_loss_viz"],
        rows,
    )
    write_curves(os.path.join(run_dir, "pinch_vs_push.png"), list(range(n)), [[r[k] for r in rows] for k in (1, 2, 3, 4)], log_y=True)
    return out


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heightsculpt", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def common(sp):
        sp.add_argument("--config", help="RunConfig JSON; flags override its keys")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="run directory (default out/<command>_<timestamp>)")

    g = sub.add_parser("gen-data", help="generate an oracle dataset")
    common(g)
    g.add_argument("--material")
    g.add_argument("--tool")
    g.add_argument("--samples", type=int)
    g.add_argument("--start", help="initial state HFD (default: flat slab)")

    t = sub.add_parser("train", help="train a dynamics model")
    common(t)
    t.add_argument("--data", required=True, help="dataset directory")
    t.add_argument("--loss", choices=["3d", "3d+viz"])
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--eval", help="held-out dataset directory to report metrics on")

    pl = sub.add_parser("plan", help="adjust a goal and sculpt it with MPC on the oracle")
    common(pl)
    pl.add_argument("--model", required=True)
    pl.add_argument("--goal", help="HFD/PGM path, 'glyph:<letter>' or 'flat' (default glyph:X)")
    pl.add_argument("--start", help="start state HFD (default: flat slab)")
    pl.add_argument("--material")
    pl.add_argument("--tool")
    pl.add_argument("--actions", type=int)
    pl.add_argument("--chunk", type=int)
    pl.add_argument("--w3d", type=float)
    pl.add_argument("--wviz", type=float)
    pl.add_argument("--refiner", choices=["gd", "cem"])
    pl.add_argument("--iters", type=int)
    pl.add_argument("--trials", type=int)
    pl.add_argument("--reinit", action="store_true", help="greedy re-initialization at every replan")

    e = sub.add_parser("experiments", help="experiment harnesses")
    esub = e.add_subparsers(dest="experiment", metavar="experiment")
    esub.required = True
    cm = esub.add_parser("cross-material")
    common(cm)
    cm.add_argument("--materials", default="foam,dough,sand")
    cm.add_argument("--tool")
    cm.add_argument("--n-train", type=int, default=300)
    cm.add_argument("--n-test", type=int, default=40)
    cm.add_argument("--epochs", type=int)
    se = esub.add_parser("sample-efficiency")
    common(se)
    se.add_argument("--sizes", default="100,300,1000")
    se.add_argument("--material")
    se.add_argument("--tool")
    se.add_argument("--n-test", type=int, default=40)
    se.add_argument("--step-budget", type=int, default=600)
    ns = esub.add_parser("noise-sweep")
    common(ns)
    ns.add_argument("--model", required=True)
    ns.add_argument("--goal")
    ns.add_argument("--sigmas", default="0,0.05,0.1,0.2,0.3,0.5")
    ns.add_argument("--noise-trials", type=int, default=8)
    ns.add_argument("--actions", type=int)
    ns.add_argument("--iters", type=int)
    pp = esub.add_parser("pinch-vs-push")
    common(pp)
    pp.add_argument("--push-model", required=True)
    pp.add_argument("--pinch-model", required=True)
    pp.add_argument("--goal", help="'ridge' (default), or as for plan")
    pp.add_argument("--material")
    pp.add_argument("--actions", type=int)
    pp.add_argument("--chunk", type=int)
    pp.add_argument("--iters", type=int)
    return p


COMMANDS = {
    ("gen-data", None): cmd_gen_data,
    ("train", None): cmd_train,
    ("plan", None): cmd_plan,
    ("experiments", "cross-material"): cmd_cross_material,
    ("experiments", "sample-efficiency"): cmd_sample_efficiency,
    ("experiments", "noise-sweep"): cmd_noise_sweep,
    ("experiments", "pinch-vs-push"): cmd_pinch_vs_push,
}

CONFIG_ERRORS = (ConfigError, PresetError, ActionError, ModelError, KeyError, UsageError)
IO_ERRORS = (OSError, FormatError, DatasetError, CheckpointError, FieldError)
NUMERIC_ERRORS = (TrainingError, PlanError, ObjectiveError, FloatingPointError)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0) and EXIT_CONFIG
    key = (args.command, getattr(args, "experiment", None))
    if key not in COMMANDS:
        parser.print_usage(sys.stderr)
        print("error: a command is required", file=sys.stderr)
        return EXIT_CONFIG
    name = key[0] if key[1] is None else key[1]
    torch.set_num_threads(1)  # bit-reproducible reductions
    try:
        cfg = load_config(args)
        run_dir = make_run_dir(cfg, name, args.out)
    except CONFIG_ERRORS as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    _setup_logging(run_dir, args.verbose)
    _snapshot(run_dir, cfg, argv)
    try:
        result = COMMANDS[key](args, cfg, run_dir)
    except CONFIG_ERRORS as e:
        log.error("config error: %s", e)
        return EXIT_CONFIG
    except IO_ERRORS as e:
        log.error("I/O error: %s", e)
        return EXIT_IO
    except NUMERIC_ERRORS as e:
        log.error("numerical abort: %s", e)
        return EXIT_NUMERIC
    _write_json(os.path.join(run_dir, "result.json"), result)
    print(run_dir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
