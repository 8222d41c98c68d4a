"""Shared fixtures: a small toy dataset and a cheaply trained checkpoint.

Both are session-scoped; the dataset is ~25 samples and the checkpoint is
a few seconds of training at a reduced channel scale, enough to exercise
loading, generation and reporting paths without converging anything.
"""

import pathlib

import pytest
import torch

torch.set_num_threads(1)

from talkinghead.toydata import make_toy_dataset
from talkinghead.training import TrainConfig, load_split_samples, train

SMALL_N = 25
SMALL_SEED = 42


@pytest.fixture(scope="session")
def toy_small(tmp_path_factory) -> tuple[pathlib.Path, dict]:
    """(manifest path, header) of a 25-sample toy dataset."""
    root = tmp_path_factory.mktemp("toy_small")
    manifest, header = make_toy_dataset(root, n_samples=SMALL_N, seed=SMALL_SEED)
    return manifest, header


@pytest.fixture(scope="session")
def toy_small_manifest(toy_small) -> pathlib.Path:
    return toy_small[0]


@pytest.fixture(scope="session")
def toy_small_header(toy_small) -> dict:
    return toy_small[1]


@pytest.fixture(scope="session")
def toy_small_splits(toy_small_manifest):
    return load_split_samples(toy_small_manifest, "auto", 0.16)


@pytest.fixture(scope="session")
def tiny_train_config() -> TrainConfig:
    return TrainConfig(
        channel_scale=0.1,
        batch_size=4,
        max_epochs=2,
        val_max_samples=3,
        seed=SMALL_SEED,
    )


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory, toy_small_splits, tiny_train_config) -> pathlib.Path:
    """Best checkpoint of a two-epoch run; exists, loads, is not converged."""
    out = tmp_path_factory.mktemp("tiny_run")
    result = train(toy_small_splits["train"], toy_small_splits["val"], tiny_train_config, out)
    return result.best_checkpoint
