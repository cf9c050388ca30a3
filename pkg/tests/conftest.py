"""
Shared fixtures: tiny configurations that train in well under a second
"""

import numpy as np
import pytest

from mfsb.core.composition import generate_space, make_split
from mfsb.core.model import CompositionModel
from mfsb.core.synth import build_generator, materialize_dataset
from mfsb.models.config import config_from_flat
from mfsb.services.experiment_service import ExperimentService, prepare_data
from mfsb.db.run_ledger import RunLedger

TINY = {
    "n_states": 3,
    "n_objects": 3,
    "unseen_fraction": 0.3,
    "samples_per_pair": 2,
    "eval_samples_per_pair": 2,
    "d_in": 8,
    "d": 8,
    "prefix_length": 2,
    "epochs": 1,
    "batch_size": 4,
    "n_points": 5,
}


def tiny_config(**overrides):
    values = dict(TINY)
    values.update(overrides)
    return config_from_flat(values)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def config():
    return tiny_config()


@pytest.fixture
def data(config):
    return prepare_data(config)


@pytest.fixture
def model(config, data):
    return CompositionModel.build(data.space, config)


@pytest.fixture
def space_8x10():
    return generate_space(8, 10, seed=0)


@pytest.fixture
def split_8x10(space_8x10):
    return make_split(space_8x10, 0.3, 10, seed=0)


@pytest.fixture
def dataset_8x10(space_8x10, split_8x10):
    gen = build_generator(space_8x10, 32, seed=7, noise_sigma=0.1)
    return gen, materialize_dataset(space_8x10, split_8x10, gen, 0.1, seed=11)


@pytest.fixture
def experiments(tmp_path):
    return ExperimentService(out_dir=tmp_path / "runs", ledger=RunLedger(tmp_path / "runs" / "ledger.db"))


@pytest.fixture
def make_config():
    return tiny_config


@pytest.fixture
def tiny_config_text():
    return "".join(f"{key} = {value}\n" for key, value in TINY.items())
