"""
Matching Losses
Cosine-similarity class logits, per-element cross-entropy and the weighted total loss
"""

from typing import Dict, Iterable, List, Mapping, Optional, Union

import numpy as np

from mfsb.core.fusion import FusionStage, StageRecord
from mfsb.core.prompts import ELEMENT_ORDER, Element, PromptForm
from mfsb.core.tensor import Tensor, as_tensor, cosine_similarity, cross_entropy_from_logits, reshape
from mfsb.models.config import LossWeights
from mfsb.models.report import LossBreakdown
from mfsb.utils.errors import ConfigError, ContractError, ShapeError

BASELINE_SUFFIX = "hard_soft_baseline"

LossValue = Union[Tensor, float]


def class_logits(v: Union[Tensor, np.ndarray], class_feats: Union[Tensor, np.ndarray], temperature: float) -> Tensor:
    """
    logits[..., c] = cos(v, class_feats[..., c, :]) / temperature

    ``v`` is [..., d]; ``class_feats`` is [C, d] or [..., C, d].

    Raises:
        ConfigError: temperature <= 0
        DegenerateInputError: a zero-norm vector
    """
    if temperature <= 0:
        raise ConfigError(f"temperature must be > 0, got {temperature}", key="temperature")
    v, class_feats = as_tensor(v), as_tensor(class_feats)
    if class_feats.ndim < 2:
        raise ShapeError("class_feats must be [..., C, d]", [class_feats.shape])
    query = reshape(v, v.shape[:-1] + (1, v.shape[-1]))
    return cosine_similarity(query, class_feats) * (1.0 / temperature)


def element_loss(element: Element, stage: str, logits: Tensor, target) -> Tensor:
    """
    Cross-entropy of one element's logits at one stage

    Pair targets index the pair class set the logits were computed over;
    attr/obj targets are primitive indices.
    """
    if stage not in ("base", FusionStage.INTER.value, FusionStage.INTRA.value):
        raise ContractError(f"Unknown loss stage: {stage}")
    return cross_entropy_from_logits(logits, target)


def term_name(element: Element, kind: str) -> str:
    return f"{element.value}.{kind}"


def expected_terms(
    elements: Iterable[Element],
    forms: Mapping[Element, PromptForm],
    trace: Iterable[StageRecord],
) -> List[str]:
    """Term names a loss breakdown must carry for this configuration"""
    elements = [e for e in ELEMENT_ORDER if e in set(elements)]
    names = [term_name(e, BASELINE_SUFFIX) for e in elements]
    names += [term_name(e, forms[e].value) for e in elements]
    for record in trace:
        names += [term_name(e, record.stage.value) for e in record.elements]
    return names


def term_weight(name: str, weights: LossWeights) -> float:
    element, kind = name.split(".", 1)
    if kind == BASELINE_SUFFIX:
        return weights.w_pair_baseline if element == Element.PAIR.value else weights.w_primitive_baseline
    if kind == FusionStage.INTER.value:
        return weights.beta
    if kind == FusionStage.INTRA.value:
        return weights.gamma
    return weights.alpha


def total_loss(
    components: Mapping[str, LossValue],
    weights: LossWeights,
    trace: Iterable[StageRecord],
    forms: Mapping[Element, PromptForm],
    elements: Optional[Iterable[Element]] = None,
) -> LossBreakdown:
    """
    Weighted sum of the component losses

    total = w_pair * L_pair^{h+s} + w_prim * (L_attr^{h+s} + L_obj^{h+s})
            + alpha * sum(base) + beta * sum(inter) + gamma * sum(intra)

    Terms of stages that did not run are absent.

    Args:
        components: term name -> scalar loss (Tensor or float)
        weights: Loss weights
        trace: Fusion stage trace
        forms: Chosen prompt form per element
        elements: Active elements (defaults to the keys of ``forms``)

    Raises:
        ConfigError: a negative weight
        ContractError: components do not match the configuration's terms
    """
    for name in ("w_pair_baseline", "w_primitive_baseline", "alpha", "beta", "gamma"):
        if getattr(weights, name) < 0:
            raise ConfigError(f"{name} must be >= 0", key=name)

    trace = list(trace)
    expected = expected_terms(elements if elements is not None else forms.keys(), forms, trace)
    missing = [n for n in expected if n not in components]
    extra = [n for n in components if n not in expected]
    if missing or extra:
        raise ContractError(
            "Loss components do not match the configuration",
            details={"missing": missing, "unexpected": extra},
        )

    objective: Optional[Tensor] = None
    terms: Dict[str, float] = {}
    for name in expected:
        value = components[name]
        weighted = as_tensor(value) * term_weight(name, weights)
        objective = weighted if objective is None else objective + weighted
        terms[name] = float(value.item() if isinstance(value, Tensor) else value)

    breakdown = LossBreakdown(terms=terms, total=objective.item())
    breakdown.attach(objective)
    return breakdown
