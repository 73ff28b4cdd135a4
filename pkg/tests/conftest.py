"""Shared fixtures: a small on-disk dataset and a saved untrained model."""

import pytest

from nailtrace.dataset import write_dataset
from nailtrace.model import ModelConfig, build_model, save_model

SMALL_SCENE = dict(size=(64, 64), nail_half_length=(5.0, 7.0), nail_half_width=(2.5, 3.5),
                   distal_band_px=(1.5, 2.5))


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """12 scenes at 64x64 with nails scaled down to fit."""
    root = tmp_path_factory.mktemp("smallds")
    manifest = write_dataset(root, 12, base_seed=0, **SMALL_SCENE)
    return manifest


@pytest.fixture(scope="session")
def saved_model(tmp_path_factory):
    """An untrained 64x64 model checkpoint + config on disk."""
    out = tmp_path_factory.mktemp("model")
    model = build_model(ModelConfig(input_size=(64, 64), width_multiplier=0.25), seed=0)
    ckpt, cfg = out / "model.ntck", out / "model.json"
    save_model(model, ckpt, cfg)
    return ckpt, cfg
