"""
Modal Fusion Synthesizer Block
Inter-modality and intra-modality cross-attention stages and their orderings
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from mfsb.core.attention import AttentionParams, cross_attention_block
from mfsb.core.prompts import ELEMENT_ORDER, Element, PromptForm
from mfsb.core.tensor import Tensor
from mfsb.utils.errors import ConfigError, ShapeError


class FusionOrder(str, Enum):
    NONE = "none"
    INTRA = "intra"
    INTER = "inter"
    INTRA_INTER = "intra_inter"
    INTER_INTRA = "inter_intra"

    @property
    def stages(self) -> Tuple["FusionStage", ...]:
        return {
            FusionOrder.NONE: (),
            FusionOrder.INTRA: (FusionStage.INTRA,),
            FusionOrder.INTER: (FusionStage.INTER,),
            FusionOrder.INTRA_INTER: (FusionStage.INTRA, FusionStage.INTER),
            FusionOrder.INTER_INTRA: (FusionStage.INTER, FusionStage.INTRA),
        }[self]


class IntraSemantics(str, Enum):
    EQUATIONS = "equations"
    PROSE = "prose"


class FusionStage(str, Enum):
    INTER = "inter"
    INTRA = "intra"


class Modality(str, Enum):
    VISUAL = "visual"
    TEXT = "text"


@dataclass(frozen=True)
class FusionConfig:
    order: FusionOrder = FusionOrder.INTER_INTRA
    intra_semantics: IntraSemantics = IntraSemantics.EQUATIONS


# (form, n_classes, prompt length) of each block of an element's text memory
TextLayout = Tuple[Tuple[PromptForm, int, int], ...]


@dataclass
class ElementFeatures:
    """
    Visual and textual sequences per active element

    ``visual[e]`` is [..., G, d]. ``textual[e]`` is the element's text memory:
    the token rows of every class prompt of its chosen forms, [(B,) M, d],
    laid out as described by ``layout[e]``.
    """
    visual: Dict[Element, Tensor]
    textual: Dict[Element, Tensor]
    layout: Dict[Element, TextLayout] = field(default_factory=dict)

    def __post_init__(self):
        dims = {t.shape[-1] for t in [*self.visual.values(), *self.textual.values()]}
        if len(dims) > 1:
            raise ShapeError("Element features must share one model dimension", [(d,) for d in sorted(dims)])
        if set(self.visual) != set(self.textual):
            raise ShapeError("Visual and textual features cover different elements")

    @property
    def elements(self) -> List[Element]:
        return [e for e in ELEMENT_ORDER if e in self.visual]

    def with_updates(self, visual: Dict[Element, Tensor], textual: Dict[Element, Tensor]) -> "ElementFeatures":
        return replace(
            self,
            visual={**self.visual, **visual},
            textual={**self.textual, **textual},
        )

    def form_blocks(self, element: Element) -> Dict[PromptForm, Tensor]:
        """Split an element's text memory back into [..., C, L, d] per single form"""
        memory = self.textual[element]
        blocks, start = {}, 0
        for form, n_classes, length in self.layout[element]:
            rows = n_classes * length
            block = memory[..., start:start + rows, :]
            blocks[form] = block.reshape(memory.shape[:-2] + (n_classes, length, memory.shape[-1]))
            start += rows
        return blocks


def arrow_name(stage: FusionStage, element: Element, modality: Modality) -> str:
    return f"{stage.value}.{element.value}.{modality.value}"


class FusionParams:
    """Independent attention weights for each of the twelve fusion arrows"""

    def __init__(self, arrows: Dict[str, AttentionParams]):
        expected = {
            arrow_name(s, e, m) for s in FusionStage for e in ELEMENT_ORDER for m in Modality
        }
        if set(arrows) != expected:
            raise ConfigError("Fusion parameters must cover all twelve arrows")
        self.arrows = arrows

    def __getitem__(self, key: Tuple[FusionStage, Element, Modality]) -> AttentionParams:
        return self.arrows[arrow_name(*key)]

    @classmethod
    def create(cls, d: int, n_heads: int, rng: np.random.Generator, std: float = 0.02, zero_output: bool = True) -> "FusionParams":
        arrows = {}
        for stage in FusionStage:
            for element in ELEMENT_ORDER:
                for modality in Modality:
                    arrows[arrow_name(stage, element, modality)] = AttentionParams.create(
                        d, n_heads, rng, std=std, zero_output=zero_output
                    )
        return cls(arrows)

    @classmethod
    def zeros(cls, d: int, n_heads: int = 1) -> "FusionParams":
        return cls({
            arrow_name(s, e, m): AttentionParams.zeros(d, n_heads)
            for s in FusionStage for e in ELEMENT_ORDER for m in Modality
        })

    def tensors(self, arrow_names: Optional[Iterable[str]] = None) -> Dict[str, Tensor]:
        names = sorted(self.arrows) if arrow_names is None else sorted(arrow_names)
        out = {}
        for name in names:
            for key, matrix in self.arrows[name].matrices().items():
                out[f"fusion.{name}.{key}"] = matrix
        return out


def inter_fuse(feats: ElementFeatures, params: FusionParams) -> ElementFeatures:
    """
    Each element attends across modalities to itself

    v_e' = CA(v_e, t_e, t_e) and t_e' = CA(t_e, v_e, v_e), both computed from
    the pre-stage features.
    """
    visual, textual = {}, {}
    for e in feats.elements:
        v, t = feats.visual[e], feats.textual[e]
        visual[e] = cross_attention_block(v, t, t, params[FusionStage.INTER, e, Modality.VISUAL])
        textual[e] = cross_attention_block(t, v, v, params[FusionStage.INTER, e, Modality.TEXT])
    return feats.with_updates(visual, textual)


def intra_elements(elements: Iterable[Element]) -> List[Element]:
    """Elements the intra stage fuses: the pair, and attr/obj only together"""
    active = set(elements)
    fused = [Element.PAIR] if Element.PAIR in active else []
    if Element.ATTR in active and Element.OBJ in active:
        fused += [Element.ATTR, Element.OBJ]
    return fused


def intra_fuse(
    feats: ElementFeatures,
    params: FusionParams,
    semantics: IntraSemantics = IntraSemantics.EQUATIONS,
) -> ElementFeatures:
    """
    Attribute and object exchange information; the pair is refined on its own

    EQUATIONS: visual queries read the partner's text and text queries read the
    partner's visual features (pair reads its own other modality).
    PROSE: keys and values come from the query's own modality (pair attends to
    itself within each modality).
    """
    partner = {Element.PAIR: Element.PAIR, Element.ATTR: Element.OBJ, Element.OBJ: Element.ATTR}
    visual, textual = {}, {}
    for e in intra_elements(feats.elements):
        p = partner[e]
        v, t = feats.visual[e], feats.textual[e]
        if semantics is IntraSemantics.EQUATIONS:
            v_ctx, t_ctx = feats.textual[p], feats.visual[p]
        else:
            v_ctx, t_ctx = feats.visual[p], feats.textual[p]
        visual[e] = cross_attention_block(v, v_ctx, v_ctx, params[FusionStage.INTRA, e, Modality.VISUAL])
        textual[e] = cross_attention_block(t, t_ctx, t_ctx, params[FusionStage.INTRA, e, Modality.TEXT])
    return feats.with_updates(visual, textual)


@dataclass
class StageRecord:
    """Output of one fusion stage and the elements it fused"""
    stage: FusionStage
    elements: Tuple[Element, ...]
    features: ElementFeatures


def stage_elements(stage: FusionStage, elements: Iterable[Element]) -> List[Element]:
    elements = list(elements)
    if stage is FusionStage.INTER:
        return [e for e in ELEMENT_ORDER if e in elements]
    return intra_elements(elements)


def run_fusion(
    feats: ElementFeatures,
    config: FusionConfig,
    params: FusionParams,
) -> Tuple[ElementFeatures, List[StageRecord]]:
    """Apply the configured stages in order; the trace lists the stages that ran"""
    trace: List[StageRecord] = []
    current = feats
    for stage in config.order.stages:
        if stage is FusionStage.INTER:
            current = inter_fuse(current, params)
        else:
            current = intra_fuse(current, params, config.intra_semantics)
        trace.append(StageRecord(stage, tuple(stage_elements(stage, feats.elements)), current))
    return current, trace
