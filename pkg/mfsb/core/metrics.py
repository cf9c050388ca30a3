"""
CZSL Metrics
Seen/unseen accuracy under a calibration-bias sweep, harmonic mean and AUC
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from mfsb.models.report import CurvePoint, EvalReport
from mfsb.utils.errors import ConfigError, MetricError

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def predict_pairs(
    scores: np.ndarray,
    candidates: Sequence[int],
    seen_mask: np.ndarray,
    bias: float = 0.0,
) -> np.ndarray:
    """
    Argmax pair per sample after adding ``bias`` to every seen candidate

    Args:
        scores: [N, K] pair scores over the candidate list
        candidates: K pair ids, ascending
        seen_mask: [K] True where the candidate is a seen pair
        bias: Calibration offset (may be +/- inf)

    Returns:
        [N] predicted pair ids; ties go to the lowest pair id

    Raises:
        ConfigError: empty candidate set
    """
    if len(candidates) == 0:
        raise ConfigError("Candidate set is empty")
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    seen_mask = np.asarray(seen_mask, dtype=bool)
    if scores.shape[1] != len(candidates) or seen_mask.shape != (len(candidates),):
        raise ConfigError("Scores, candidates and seen mask disagree in size")
    # infinite biases select a group; adding them would tie every seen score
    if np.isposinf(bias):
        shifted = np.where(seen_mask[None, :], scores, -np.inf)
    elif np.isneginf(bias):
        shifted = np.where(seen_mask[None, :], -np.inf, scores)
    else:
        shifted = np.where(seen_mask[None, :], scores + bias, scores)
    return np.asarray(candidates, dtype=np.int64)[np.argmax(shifted, axis=1)]


def _accuracies(predicted: np.ndarray, labels: np.ndarray, label_seen: np.ndarray) -> Tuple[float, float]:
    correct = predicted == labels
    return float(correct[label_seen].mean()), float(correct[~label_seen].mean())


def bias_sweep(
    scores: np.ndarray,
    labels: Sequence[int],
    candidates: Sequence[int],
    seen_pairs: Sequence[int],
    n_points: int = 20,
) -> List[CurvePoint]:
    """
    (bias, S, U) along biases spanning [-delta, +delta] plus both infinities

    delta is the largest |best seen score - best unseen score| over the
    evaluation samples. Points are returned in ascending bias order.

    Raises:
        ConfigError: n_points below 3
        MetricError: labels lack seen or unseen pairs, or the curve is not monotone
    """
    if n_points < 3:
        raise ConfigError(f"n_points must be >= 3, got {n_points}", key="n_points")
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    seen_set = set(int(p) for p in seen_pairs)
    label_seen = np.array([int(p) in seen_set for p in labels], dtype=bool)
    if not label_seen.any() or label_seen.all():
        raise MetricError(
            "Evaluation set needs both seen and unseen samples",
            details={"n_seen": int(label_seen.sum()), "n_unseen": int((~label_seen).sum())},
        )
    seen_mask = np.array([int(p) in seen_set for p in candidates], dtype=bool)

    if seen_mask.all() or not seen_mask.any():
        delta = 0.0
    else:
        gaps = scores[:, seen_mask].max(axis=1) - scores[:, ~seen_mask].max(axis=1)
        delta = float(np.max(np.abs(gaps)))
    biases = np.concatenate([[-np.inf], np.linspace(-delta, delta, n_points), [np.inf]])

    curve = []
    for bias in biases:
        predicted = predict_pairs(scores, candidates, seen_mask, bias)
        seen_acc, unseen_acc = _accuracies(predicted, labels, label_seen)
        curve.append(CurvePoint(bias=float(bias), seen=seen_acc, unseen=unseen_acc))

    seen_path = np.array([p.seen for p in curve])
    unseen_path = np.array([p.unseen for p in curve])
    if np.any(np.diff(seen_path) < 0) or np.any(np.diff(unseen_path) > 0):
        raise MetricError("Bias sweep is not monotone")
    return curve


def harmonic_mean(seen: float, unseen: float) -> float:
    return 0.0 if seen + unseen == 0 else 2.0 * seen * unseen / (seen + unseen)


def curve_auc(curve: Sequence[CurvePoint]) -> float:
    """Trapezoidal area under U as a function of S, points sorted by S"""
    if not curve:
        return 0.0
    seen = np.array([p.seen for p in curve])
    unseen = np.array([p.unseen for p in curve])
    order = np.lexsort((-unseen, seen))
    return float(_trapezoid(unseen[order], seen[order]))


def summarize(
    curve: Sequence[CurvePoint],
    world: str,
    method: str = "",
    attr_acc: Optional[float] = None,
    obj_acc: Optional[float] = None,
) -> EvalReport:
    """Collapse a bias-sweep curve into S, U, HM and AUC"""
    if not curve:
        raise MetricError("Cannot summarize an empty curve")
    hms = [harmonic_mean(p.seen, p.unseen) for p in curve]
    best = int(np.argmax(hms))
    return EvalReport(
        method=method,
        world=world,
        seen_acc=max(p.seen for p in curve),
        unseen_acc=max(p.unseen for p in curve),
        harmonic_mean=hms[best],
        auc=min(max(curve_auc(curve), 0.0), 1.0),
        curve=list(curve),
        best_bias=curve[best].bias,
        hm_seen=curve[best].seen,
        hm_unseen=curve[best].unseen,
        attr_acc=attr_acc,
        obj_acc=obj_acc,
    )


def evaluate_primitives(
    attr_logits: Optional[np.ndarray],
    obj_logits: Optional[np.ndarray],
    states: Sequence[int],
    objects: Sequence[int],
) -> Tuple[Optional[float], Optional[float]]:
    """Independent argmax accuracy of the attribute and object branches; None when inactive"""
    def accuracy(logits, labels):
        if logits is None:
            return None
        logits = np.atleast_2d(np.asarray(logits))
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size == 0:
            return None
        return float(np.mean(np.argmax(logits, axis=1) == labels))

    return accuracy(attr_logits, states), accuracy(obj_logits, objects)
