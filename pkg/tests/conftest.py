"""Shared fixtures: the desk-scale dataset, the trained model, and the full
attack sweep are built once per session and reused by module and acceptance
tests."""

import numpy as np
import pytest

from beamsim.channel import ScenarioConfig, generate_dataset
from beamsim.config import default_run_config
from beamsim.evaluation import SweepSpec, psr_sweep
from beamsim.model import TrainConfig, train_new_model


@pytest.fixture(scope="session")
def desk_config() -> ScenarioConfig:
    return default_run_config().scenario


@pytest.fixture(scope="session")
def desk_dataset(desk_config):
    cfg = default_run_config()
    return generate_dataset(desk_config, cfg.n_samples, cfg.m)


@pytest.fixture(scope="session")
def desk_model(desk_dataset):
    model, history = train_new_model(desk_dataset, TrainConfig())
    model.history = history
    return model


@pytest.fixture(scope="session")
def desk_sweep(desk_model, desk_dataset):
    return psr_sweep(desk_model, desk_dataset, SweepSpec())


@pytest.fixture(scope="session")
def small_dataset():
    """A quick dataset for unit tests that need training but not desk scale."""
    return generate_dataset(ScenarioConfig(rng_seed=505), 12_000, 12)


@pytest.fixture(scope="session")
def small_model(small_dataset):
    model, _ = train_new_model(small_dataset, TrainConfig(epochs=4, rng_seed=11))
    return model


def eval_subset(dataset, n, seed=0):
    """Deterministic test-split subset as (ids, x_m, labels, rss_full)."""
    ids = dataset.split_indices("test")
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(ids, size=min(n, len(ids)), replace=False))
    return pick, dataset.x_m[pick], dataset.labels[pick].astype(np.int64), \
        dataset.rss[pick]
