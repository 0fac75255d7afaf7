import json

import pytest

from heightsculpt.config import ConfigError, PlannerConfig, RunConfig


def test_defaults_round_trip():
    cfg = RunConfig()
    assert RunConfig.from_json(cfg.to_json()) == cfg
    assert RunConfig.from_dict(json.loads(cfg.to_json())).to_json() == cfg.to_json()


def test_nested_dicts_accepted():
    cfg = RunConfig.from_dict({"planner": {"n_actions": 10, "chunk": 2}, "train": {"epochs": 3}})
    assert isinstance(cfg.planner, PlannerConfig)
    assert cfg.planner.n_actions == 10 and cfg.train.epochs == 3
    assert cfg.planner.goal_weights == (1.0, 10.0, 0.1)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_dict({"grdi": 64})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"planner": {"horizon": 3}})


@pytest.mark.parametrize(
    "bad",
    [
        {"grid": 2},
        {"d_max": 0.0},
        {"z_max": -1.0},
        {"cell_size": 0.0},
        {"surface": 120.0},
        {"material": "clay"},
        {"tool": "spoon"},
        {"train": {"objective": "viz"}},
        {"planner": {"refiner": "sgd"}},
        {"planner": {"n_actions": 2, "chunk": 5}},
        {"model": {"kind": "poke"}},
    ],
)
def test_validation(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_bad_json():
    with pytest.raises(ConfigError):
        RunConfig.from_json("{not json")


def test_derived_values():
    cfg = RunConfig(grid=64, l_max=50.0, c_max=30.0)
    assert cfg.resolved_cell_size == pytest.approx(304.8 / 64, rel=1e-6)
    assert cfg.model_config("push").shape_scale == 50.0
    assert cfg.model_config("pinch").shape_scale == 30.0
    assert cfg.bounds.l_max == 50.0
