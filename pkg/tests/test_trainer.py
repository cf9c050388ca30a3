import math

import numpy as np
import pytest

from mfsb.core.checkpoint import load_checkpoint
from mfsb.core.model import CompositionModel
from mfsb.core.synth import Dataset
from mfsb.core.trainer import fit, make_optimizer, train_epoch
from mfsb.models.config import config_hash
from mfsb.services.evaluation_service import EvaluationService
from mfsb.utils.errors import ConfigError


def fresh_model(data, config):
    return CompositionModel.build(data.space, config)


class TestTrainEpoch:
    def test_one_breakdown_per_batch(self, config, data, model, rng):
        state = make_optimizer(model)
        steps = train_epoch(model, data.dataset, data.split, state, rng)
        assert len(steps) == math.ceil(len(data.dataset.train) / config.training.batch_size)
        assert state.step == len(steps)

    def test_empty_training_set(self, data, model, rng):
        with pytest.raises(ConfigError):
            train_epoch(model, Dataset(), data.split, make_optimizer(model), rng)


class TestFit:
    def test_zero_epochs(self, data, make_config):
        model = fresh_model(data, make_config(epochs=0))
        before = model.state_dict()
        result = fit(model, data.dataset, data.split)
        assert result.history.steps == []
        assert result.history.epoch_mean_totals == []
        assert result.checkpoint_path is None
        for name, value in model.state_dict().items():
            np.testing.assert_array_equal(value, before[name])

    def test_zero_learning_rate_keeps_parameters(self, data, make_config):
        model = fresh_model(data, make_config(lr=0.0))
        before = model.state_dict()
        fit(model, data.dataset, data.split)
        for name, value in model.state_dict().items():
            np.testing.assert_array_equal(value, before[name])

    def test_training_changes_parameters(self, data, model):
        before = model.state_dict()
        fit(model, data.dataset, data.split)
        changed = [name for name, value in model.state_dict().items() if not np.array_equal(value, before[name])]
        assert "head.pair" in changed and "prefix.attr" in changed

    def test_same_seed_same_history(self, config, data):
        a = fit(fresh_model(data, config), data.dataset, data.split).history
        b = fit(fresh_model(data, config), data.dataset, data.split).history
        assert a.totals == b.totals
        assert a.steps[0].terms == b.steps[0].terms

    def test_loss_decreases_on_average(self, data, make_config):
        config = make_config(epochs=8, lr=0.02)
        history = fit(fresh_model(data, config), data.dataset, data.split).history
        assert len(history.epoch_mean_totals) == 8
        assert history.epoch_mean_totals[-1] < history.epoch_mean_totals[0]

    def test_validation_each_epoch(self, data, make_config):
        config = make_config(epochs=2)
        validate = EvaluationService().validator(data.dataset, data.split, "open")
        history = fit(fresh_model(data, config), data.dataset, data.split, validate=validate).history
        assert [r.world for r in history.epoch_reports] == ["open", "open"]

    def test_checkpoint_written(self, tmp_path, config, data, model):
        result = fit(model, data.dataset, data.split, checkpoint_path=tmp_path / "run" / "model.ckpt")
        stored_hash, tensors = load_checkpoint(result.checkpoint_path)
        assert stored_hash == config_hash(config)
        for name, value in model.state_dict().items():
            np.testing.assert_array_equal(tensors[name], value)
