"""Shared fixtures: small fields, tiny models, and the session-trained models.

The trained models are expensive (about a minute each on one core), so they are
built once per session and shared by the acceptance and planner tests.
"""

import numpy as np
import pytest
import torch

from heightsculpt.dynamics.model import DynamicsModel, ModelConfig
from heightsculpt.dynamics.train import train
from heightsculpt.field import HeightField, flat_field
from heightsculpt.sim.dataset import generate_dataset
from heightsculpt.sim.materials import MATERIALS, TOOLS

torch.set_num_threads(1)

TRAIN_SEED = 1  # oracle data seed for training sets
TEST_SEED = 99  # oracle data seed for held-out sets
N_TRAIN = 300
N_TEST = 40
EPOCHS = 30
SMALL_CHANNELS = (8, 16, 16)

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def smooth_field(rng, size=32, amp=3.0, surface=70.0, cs=2.0, modes=3) -> HeightField:
    """Sum of a few low-frequency sinusoids around ``surface``."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    d = np.full((size, size), surface)
    for _ in range(modes):
        kx, ky = rng.uniform(0.5, 2.0, 2)
        ph = rng.uniform(0, 2 * np.pi)
        d += amp / modes * np.sin(2 * np.pi * (kx * xx + ky * yy) + ph)
    return HeightField(d, cs, 100.0)


def tiny_config(**kw) -> ModelConfig:
    base = dict(
        patch_side=16,
        channels=(3, 4, 4),
        hidden=(6, 8),
        shape_grid=4,
        shape_channels=2,
        fusion_dilations=(1, 1, 1, 1, 1),
        cell_size=2.0,
    )
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model():
    """Random (non-zero head) double-precision miniature network."""
    return DynamicsModel(tiny_config(zero_head=False)).to(torch.float64)


@pytest.fixture(scope="session")
def oracle_data():
    """(train, test) datasets per material, push tool, flat start."""
    cache = {}

    def get(material):
        if material not in cache:
            f = flat_field()
            m, t = MATERIALS[material], TOOLS["rod"]
            cache[material] = (
                generate_dataset(f, N_TRAIN, m, t, seed=TRAIN_SEED),
                generate_dataset(f, N_TEST, m, t, seed=TEST_SEED),
            )
        return cache[material]

    return get


@pytest.fixture(scope="session")
def trained_models(oracle_data):
    """Models trained on 300 oracle samples, keyed by (material, objective)."""
    cache = {}

    def get(material, objective="3d"):
        key = (material, objective)
        if key not in cache:
            train_ds, _ = oracle_data(material)
            model = DynamicsModel(ModelConfig(channels=SMALL_CHANNELS, kind=train_ds.kind))
            cache[key], _ = train(model, train_ds, objective, epochs=EPOCHS, seed=0)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def foam_planner_model(trained_models):
    """The foam L_3D model in single precision, as used for planning."""
    return trained_models("foam", "3d").to(torch.float32)


@pytest.fixture(scope="session")
def pinch_model():
    ds = generate_dataset(flat_field(), N_TRAIN, MATERIALS["foam"], TOOLS["gripper"], seed=TRAIN_SEED)
    model = DynamicsModel(ModelConfig(channels=SMALL_CHANNELS, kind="pinch", shape_scale=40.0))
    model, _ = train(model, ds, "3d", epochs=EPOCHS, seed=0)
    return model.to(torch.float32)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
