"""
Trainer
Seeded mini-batch Adam training of a composition model
"""

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from mfsb.core.checkpoint import save_checkpoint
from mfsb.core.composition import Split
from mfsb.core.model import CompositionModel
from mfsb.core.optim import AdamState, adam_step
from mfsb.core.synth import Dataset
from mfsb.core.tensor import Tape
from mfsb.models.config import config_hash
from mfsb.models.report import EvalReport, LossBreakdown, TrainHistory
from mfsb.utils.errors import ConfigError
from mfsb.utils.logger import app_logger, log_epoch, log_training_step
from mfsb.utils.seeding import stream_rng

Validator = Callable[[CompositionModel], EvalReport]


def make_optimizer(model: CompositionModel) -> AdamState:
    training = model.config.training
    return AdamState(lr=training.lr, beta1=training.beta1, beta2=training.beta2, eps=training.eps)


def train_epoch(
    model: CompositionModel,
    dataset: Dataset,
    split: Split,
    state: AdamState,
    rng: np.random.Generator,
    epoch: int = 0,
) -> List[LossBreakdown]:
    """
    One pass over the shuffled training set

    Args:
        model: Model to update in place
        dataset: Materialized samples
        split: Split whose seen pairs form the pair class set
        state: Adam state (step count advances once per mini-batch)
        rng: Shuffle stream
        epoch: Epoch number, for logging

    Returns:
        Loss breakdown of every mini-batch

    Raises:
        ConfigError: empty training set
    """
    samples = dataset.train
    if not samples:
        raise ConfigError("Training set is empty")

    features = dataset.features("train")
    pairs = [s.pair for s in samples]
    seen_pairs = split.seen_pairs
    batch_size = model.config.training.batch_size
    order = rng.permutation(len(samples))

    history = []
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        params = model.trainable_parameters()
        for p in params.values():
            p.zero_grad()
        with Tape() as tape:
            breakdown = model.training_loss(features[idx], [pairs[i] for i in idx], seen_pairs)
        grads = tape.backward(breakdown.objective)
        # history keeps scalars only; dropping the objective frees the tape
        breakdown.attach(None)
        adam_step(params, {name: grads[t] for name, t in params.items() if t in grads}, state)
        log_training_step(app_logger, step=state.step, total=breakdown.total, epoch=epoch)
        history.append(breakdown)
    return history


@dataclass
class FitResult:
    model: CompositionModel
    history: TrainHistory
    checkpoint_path: Optional[Path] = None


def fit(
    model: CompositionModel,
    dataset: Dataset,
    split: Split,
    checkpoint_path: Optional[Path] = None,
    validate: Optional[Validator] = None,
) -> FitResult:
    """
    Train for the configured number of epochs

    Args:
        model: Freshly built model (trained in place)
        dataset: Materialized samples
        split: Split
        checkpoint_path: Where to write the trainable tensors, if anywhere
        validate: Callback returning the validation report of the current model

    Returns:
        FitResult with the per-step history and one report per epoch

    Raises:
        ConfigError: empty training set
        CheckpointError: checkpoint path not writable
    """
    config = model.config
    state = make_optimizer(model)
    rng = stream_rng(config.seed, "shuffle")
    history = TrainHistory()

    for epoch in range(1, config.training.epochs + 1):
        started = time.perf_counter()
        steps = train_epoch(model, dataset, split, state, rng, epoch)
        history.steps.extend(steps)
        mean_total = float(np.mean([b.total for b in steps]))
        history.epoch_mean_totals.append(mean_total)

        extra = {}
        if validate is not None:
            report = validate(model)
            history.epoch_reports.append(report)
            extra = {"val_hm": round(report.harmonic_mean, 4), "val_auc": round(report.auc, 4)}
        log_epoch(
            app_logger,
            epoch=epoch,
            mean_total=mean_total,
            steps=len(steps),
            duration_ms=int((time.perf_counter() - started) * 1000),
            **extra,
        )

    path = None
    if checkpoint_path is not None:
        path = save_checkpoint(checkpoint_path, model.state_dict(), config_hash(config))
    return FitResult(model=model, history=history, checkpoint_path=path)
