"""
Evaluation Service
Scores a model over an evaluation phase and turns the scores into an EvalReport
"""

from typing import Callable, Optional, Sequence

import numpy as np

from mfsb.config import settings
from mfsb.core.composition import Phase, Split, World, candidate_set
from mfsb.core.metrics import bias_sweep, evaluate_primitives, predict_pairs, summarize
from mfsb.core.model import CompositionModel, PairScores
from mfsb.core.synth import Dataset
from mfsb.models.report import EvalReport
from mfsb.utils.errors import ConfigError
from mfsb.utils.logger import app_logger


class EvaluationService:
    """Batched scoring, bias sweep and summary"""

    def __init__(self, batch_size: Optional[int] = None):
        self.batch_size = batch_size or settings.EVAL_BATCH_SIZE

    def score(self, model: CompositionModel, features: np.ndarray, candidates: Sequence[int]) -> PairScores:
        """Candidate scores of every row of ``features``, in batches"""
        if len(candidates) == 0:
            raise ConfigError("Candidate set is empty")
        parts = [
            model.score(features[start:start + self.batch_size], candidates)
            for start in range(0, len(features), self.batch_size)
        ]

        def stack(name):
            arrays = [getattr(p, name) for p in parts]
            return None if arrays[0] is None else np.concatenate(arrays, axis=0)

        return PairScores(pair=stack("pair"), attr=stack("attr"), obj=stack("obj"))

    def predict(
        self,
        model: CompositionModel,
        features: np.ndarray,
        candidates: Sequence[int],
        seen: Sequence[int],
        bias: float = 0.0,
    ) -> np.ndarray:
        """Predicted pair id per sample at one calibration bias"""
        seen_set = set(seen)
        seen_mask = np.array([p in seen_set for p in candidates], dtype=bool)
        scores = self.score(model, features, candidates)
        return predict_pairs(scores.pair, candidates, seen_mask, bias)

    def evaluate(
        self,
        model: CompositionModel,
        dataset: Dataset,
        split: Split,
        world: World,
        phase: Phase = "test",
        method: str = "",
    ) -> EvalReport:
        """
        S, U, HM, AUC and primitive accuracies of one phase in one world

        Raises:
            MetricError: the phase lacks seen or unseen samples
        """
        space = model.space
        candidates = candidate_set(space, split, world, phase)
        samples = dataset.samples(phase)
        scores = self.score(model, dataset.features(phase), candidates)
        labels = dataset.pair_ids(phase, space)

        curve = bias_sweep(scores.pair, labels, candidates, split.seen, model.config.eval.n_points)
        attr_acc, obj_acc = evaluate_primitives(
            scores.attr,
            scores.obj,
            [s.pair[0] for s in samples],
            [s.pair[1] for s in samples],
        )
        report = summarize(curve, world, method, attr_acc=attr_acc, obj_acc=obj_acc)

        app_logger.info(
            "evaluation_complete",
            phase=phase,
            world=world,
            n_samples=len(samples),
            n_candidates=len(candidates),
            seen=round(report.seen_acc, 4),
            unseen=round(report.unseen_acc, 4),
            hm=round(report.harmonic_mean, 4),
            auc=round(report.auc, 4),
        )
        return report

    def validator(self, dataset: Dataset, split: Split, world: World) -> Callable[[CompositionModel], EvalReport]:
        """Per-epoch validation callback for the trainer"""
        return lambda model: self.evaluate(model, dataset, split, world, phase="val")
