"""
Composition Model
Prompt bank, encoders and fusion block assembled for one experiment configuration
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from mfsb.core.composition import CompositionSpace
from mfsb.core.encoders import ImageEncoder, TextEncoder, encode_image, encode_text, pool_text, pool_visual
from mfsb.core.fusion import ElementFeatures, FusionParams, FusionStage, Modality, StageRecord, arrow_name, run_fusion, stage_elements
from mfsb.core.losses import BASELINE_SUFFIX, class_logits, element_loss, term_name, total_loss
from mfsb.core.prompts import (
    ELEMENT_ORDER,
    Element,
    PromptBank,
    PromptForm,
    SoftPrefix,
    TokenEmbeddingTable,
    class_labels,
    class_prompt_tensor,
)
from mfsb.core.tensor import Tensor, as_tensor, concat
from mfsb.models.config import ExperimentConfig
from mfsb.models.report import LossBreakdown
from mfsb.utils.errors import ContractError, ShapeError
from mfsb.utils.seeding import stream_rng

# element -> single form -> logits [B, C]
FormLogits = Dict[Element, Dict[PromptForm, Tensor]]


@dataclass
class ForwardPass:
    """Everything one forward computes"""
    base: FormLogits
    stages: Dict[FusionStage, FormLogits] = field(default_factory=dict)
    trace: List[StageRecord] = field(default_factory=list)

    def final(self, element: Element, forms: Sequence[PromptForm]) -> Dict[PromptForm, Tensor]:
        """Logits of the last stage that fused ``element``, else its un-fused logits"""
        for record in reversed(self.trace):
            if element in record.elements:
                return self.stages[record.stage][element]
        return {f: self.base[element][f] for f in forms}


@dataclass
class PairScores:
    """Evaluation scores as plain arrays"""
    pair: np.ndarray
    attr: Optional[np.ndarray] = None
    obj: Optional[np.ndarray] = None


class CompositionModel:
    """Trainable prompts, visual heads and fusion arrows around frozen encoders"""

    def __init__(
        self,
        space: CompositionSpace,
        config: ExperimentConfig,
        bank: PromptBank,
        text_encoder: TextEncoder,
        image_encoder: ImageEncoder,
        fusion: FusionParams,
    ):
        self.space = space
        self.config = config
        self.bank = bank
        self.text_encoder = text_encoder
        self.image_encoder = image_encoder
        self.fusion = fusion
        self.elements: Tuple[Element, ...] = config.elements
        self.forms: Dict[Element, PromptForm] = config.prompt.forms()
        self._mark_trainable()

    @classmethod
    def build(cls, space: CompositionSpace, config: ExperimentConfig) -> "CompositionModel":
        """
        Initialize every structure from the experiment's init stream

        Construction order is fixed and independent of the active elements, so
        toggling an element never shifts another structure's initial values.
        """
        rng = stream_rng(config.seed, "init")
        d = config.space.d
        table = TokenEmbeddingTable(space, d, rng)
        text_encoder = TextEncoder(d, rng)
        image_encoder = ImageEncoder(config.space.d_in, d, rng)
        prefixes = {
            e: SoftPrefix.create(e, config.prompt.prefix_length, d, rng) for e in ELEMENT_ORDER
        }
        fusion = FusionParams.create(d, config.fusion.n_heads, rng)
        return cls(space, config, PromptBank(table, prefixes), text_encoder, image_encoder, fusion)

    # Parameters

    def used_arrows(self) -> List[str]:
        names = []
        for stage in self.config.fusion.order.stages:
            for e in stage_elements(stage, self.elements):
                names += [arrow_name(stage, e, m) for m in Modality]
        return sorted(set(names))

    def _mark_trainable(self) -> None:
        for e in ELEMENT_ORDER:
            active = e in self.elements
            self.image_encoder.heads[e].requires_grad = active
            self.bank.prefixes[e].vectors.requires_grad = active
        used = set(self.used_arrows())
        for name, arrow in self.fusion.arrows.items():
            for matrix in arrow.matrices().values():
                matrix.requires_grad = name in used

    def named_parameters(self) -> Dict[str, Tensor]:
        """Every tensor of the model, trainable or frozen"""
        params = {"table.embeddings": self.bank.table.embeddings}
        params.update(self.text_encoder.frozen())
        params.update(self.image_encoder.frozen())
        for e in ELEMENT_ORDER:
            params[f"head.{e.value}"] = self.image_encoder.heads[e]
            params[f"prefix.{e.value}"] = self.bank.prefixes[e].vectors
        params.update(self.fusion.tensors())
        return params

    def trainable_parameters(self) -> Dict[str, Tensor]:
        return {name: t for name, t in sorted(self.named_parameters().items()) if t.requires_grad}

    def frozen_parameters(self) -> Dict[str, Tensor]:
        return {name: t for name, t in sorted(self.named_parameters().items()) if not t.requires_grad}

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.trainable_parameters().items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """
        Overwrite trainable tensors

        Raises:
            ShapeError: names or shapes differ from this model's trainables
        """
        params = self.trainable_parameters()
        if set(state) != set(params):
            raise ShapeError(
                "Checkpoint tensors do not match the model's trainable parameters",
                [],
            )
        for name, value in state.items():
            if value.shape != params[name].shape:
                raise ShapeError(f"Shape mismatch for {name}", [value.shape, params[name].shape])
        for name, value in state.items():
            params[name].data[...] = value

    # Forward

    def class_ids(self, element: Element, pair_ids: Sequence[int]) -> List[int]:
        return class_labels(element, self.space, pair_ids)

    def encode_classes(self, element: Element, form: PromptForm, pair_ids: Sequence[int]) -> Tuple[Tensor, Tensor]:
        """Token features [C, L, d] and pooled features [C, d] of one single form"""
        prompts = class_prompt_tensor(element, form, self.space, self.bank, pair_ids)
        return encode_text(prompts, self.text_encoder)

    def _stage_logits(self, feats: ElementFeatures, element: Element) -> Dict[PromptForm, Tensor]:
        v = pool_visual(feats.visual[element])
        tau = self.config.weights.temperature
        return {
            form: class_logits(v, pool_text(block, self.text_encoder), tau)
            for form, block in feats.form_blocks(element).items()
        }

    def forward(self, x, pair_ids: Sequence[int], baseline_forms: bool = False) -> ForwardPass:
        """
        Logits of every active element before and after each fusion stage

        Args:
            x: [B, d_in] image features
            pair_ids: Pair class set of the pair element
            baseline_forms: Also compute hard and soft logits of every element
                (the hard+soft baseline loss needs both)
        """
        x = as_tensor(x)
        if x.ndim != 2:
            raise ShapeError("forward expects a [B, d_in] batch", [x.shape])
        tau = self.config.weights.temperature
        sequences, pooled, _ = encode_image(x, self.image_encoder)

        base: FormLogits = {}
        memory: Dict[Element, Tensor] = {}
        layout = {}
        for e in self.elements:
            chosen = self.forms[e].parts
            needed = (PromptForm.HARD, PromptForm.SOFT) if baseline_forms else chosen
            base[e], rows, blocks = {}, [], []
            for form in needed:
                tokens, pooled_t = self.encode_classes(e, form, pair_ids)
                base[e][form] = class_logits(pooled[e], pooled_t, tau)
                if form in chosen:
                    n_classes, length, d = tokens.shape
                    rows.append(tokens.reshape(n_classes * length, d))
                    blocks.append((form, n_classes, length))
            memory[e] = rows[0] if len(rows) == 1 else concat(rows, axis=0)
            layout[e] = tuple(blocks)

        feats = ElementFeatures(
            visual={e: sequences[e] for e in self.elements},
            textual=memory,
            layout=layout,
        )
        _, trace = run_fusion(feats, self.config.fusion.to_fusion_config(), self.fusion)

        result = ForwardPass(base=base, trace=trace)
        for record in trace:
            result.stages[record.stage] = {
                e: self._stage_logits(record.features, e) for e in record.elements
            }
        return result

    # Training objective

    def targets(self, pairs: Sequence[Tuple[int, int]], pair_ids: Sequence[int]) -> Dict[Element, np.ndarray]:
        """Class indices per element; pair targets index ``pair_ids``"""
        position = {int(p): i for i, p in enumerate(pair_ids)}
        out = {
            Element.ATTR: np.array([s for s, _ in pairs], dtype=np.int64),
            Element.OBJ: np.array([o for _, o in pairs], dtype=np.int64),
        }
        try:
            out[Element.PAIR] = np.array([position[self.space.pair_id(s, o)] for s, o in pairs], dtype=np.int64)
        except KeyError as e:
            raise ContractError(f"Training pair {e} is not in the pair class set")
        return out

    def training_loss(self, x, pairs: Sequence[Tuple[int, int]], pair_ids: Sequence[int]) -> LossBreakdown:
        """
        Weighted total loss of a batch

        Args:
            x: [B, d_in] image features
            pairs: (state, object) label per sample
            pair_ids: Pair class set (the seen pairs during training)
        """
        out = self.forward(x, pair_ids, baseline_forms=True)
        targets = self.targets(pairs, pair_ids)

        components: Dict[str, Tensor] = {}
        for e in self.elements:
            hard = element_loss(e, "base", out.base[e][PromptForm.HARD], targets[e])
            soft = element_loss(e, "base", out.base[e][PromptForm.SOFT], targets[e])
            components[term_name(e, BASELINE_SUFFIX)] = hard + soft
            chosen = {PromptForm.HARD: hard, PromptForm.SOFT: soft}
            parts = [chosen[f] for f in self.forms[e].parts]
            components[term_name(e, self.forms[e].value)] = parts[0] if len(parts) == 1 else parts[0] + parts[1]
        for record in out.trace:
            for e in record.elements:
                losses = [
                    element_loss(e, record.stage.value, logits, targets[e])
                    for logits in out.stages[record.stage][e].values()
                ]
                value = losses[0]
                for extra in losses[1:]:
                    value = value + extra
                components[term_name(e, record.stage.value)] = value

        return total_loss(components, self.config.weights, out.trace, self.forms, self.elements)

    # Inference

    def score(self, x, candidates: Sequence[int]) -> PairScores:
        """
        Candidate pair scores: pair logit + attr logit[s] + obj logit[o] over
        the active elements, each from its final fusion stage; hard+soft
        elements average their two forms
        """
        candidates = [int(p) for p in candidates]
        out = self.forward(x, candidates)
        final = {}
        for e in self.elements:
            per_form = out.final(e, self.forms[e].parts)
            final[e] = np.mean([logits.data for logits in per_form.values()], axis=0)

        n = as_tensor(x).shape[0]
        states = np.array([self.space.pair_of(p)[0] for p in candidates], dtype=np.int64)
        objects = np.array([self.space.pair_of(p)[1] for p in candidates], dtype=np.int64)
        total = np.zeros((n, len(candidates)))
        if Element.PAIR in final:
            total += final[Element.PAIR]
        if Element.ATTR in final:
            total += final[Element.ATTR][:, states]
        if Element.OBJ in final:
            total += final[Element.OBJ][:, objects]
        return PairScores(pair=total, attr=final.get(Element.ATTR), obj=final.get(Element.OBJ))
