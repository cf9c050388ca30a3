"""
Prompt Bank
Hard, soft and hard+soft prompts for the pair, attribute and object elements
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from mfsb.core.composition import CompositionSpace
from mfsb.core.tensor import Tensor, broadcast_to, concat
from mfsb.utils.errors import ConfigError, ContractError, VocabularyError

TEMPLATE_WORDS = ("a", "photo", "of")
DEFAULT_PREFIX_LENGTH = 3
PREFIX_INIT_STD = 0.02


class Element(str, Enum):
    PAIR = "pair"
    ATTR = "attr"
    OBJ = "obj"


ELEMENT_ORDER = (Element.PAIR, Element.ATTR, Element.OBJ)


class PromptForm(str, Enum):
    HARD = "hard"
    SOFT = "soft"
    HARD_SOFT = "hard_soft"

    @property
    def parts(self) -> Tuple["PromptForm", ...]:
        """Single forms a prompt setting is built from"""
        if self is PromptForm.HARD_SOFT:
            return (PromptForm.HARD, PromptForm.SOFT)
        return (self,)


class TokenEmbeddingTable:
    """Frozen word embeddings for the template words and every primitive name"""

    def __init__(self, space: CompositionSpace, d: int, rng: np.random.Generator):
        tokens = list(TEMPLATE_WORDS) + list(space.states) + list(space.objects)
        self.vocab: Dict[str, int] = {tok: i for i, tok in enumerate(tokens)}
        self.states = space.states
        self.objects = space.objects
        self.embeddings = Tensor(rng.normal(0.0, 1.0, size=(len(tokens), d)), requires_grad=False)
        self.trainable = False

    @property
    def d(self) -> int:
        return self.embeddings.shape[1]

    def index(self, token: str) -> int:
        try:
            return self.vocab[token]
        except KeyError:
            raise VocabularyError(token)

    def label_token(self, element: Element, label_idx: int) -> str:
        if element is Element.ATTR:
            return self.states[label_idx]
        if element is Element.OBJ:
            return self.objects[label_idx]
        raise ContractError(f"Element {element.value} has no single label token")

    def rows(self, tokens: Sequence[str]) -> Tensor:
        return Tensor(self.embeddings.data[[self.index(t) for t in tokens]])


@dataclass
class SoftPrefix:
    """Learnable context vectors x_0..x_p for one element"""
    element: Element
    vectors: Tensor

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1:
            raise ConfigError("Soft prefix needs at least one vector", key="prefix_length")

    @property
    def length(self) -> int:
        return self.vectors.shape[0]

    @classmethod
    def create(
        cls,
        element: Element,
        length: int,
        d: int,
        rng: np.random.Generator,
        std: float = PREFIX_INIT_STD,
    ) -> "SoftPrefix":
        if length < 1:
            raise ConfigError(f"prefix_length must be >= 1, got {length}", key="prefix_length")
        return cls(element, Tensor(rng.normal(0.0, std, size=(length, d)), requires_grad=True))


@dataclass
class PromptBank:
    """Embedding table plus the soft prefixes owned by each element"""
    table: TokenEmbeddingTable
    prefixes: Dict[Element, SoftPrefix] = field(default_factory=dict)

    def prefix(self, element: Element) -> SoftPrefix:
        try:
            return self.prefixes[element]
        except KeyError:
            raise ContractError(f"No soft prefix for element {element.value}")


def compose_hard_pair(state_idx: int, object_idx: int, table: TokenEmbeddingTable) -> Tensor:
    """Embeddings of ["a", "photo", "of", state, object]"""
    return table.rows([*TEMPLATE_WORDS, table.states[state_idx], table.objects[object_idx]])


def compose_hard_single(element: Element, label_idx: int, table: TokenEmbeddingTable) -> Tensor:
    """Embeddings of ["a", "photo", "of", label]"""
    return table.rows([*TEMPLATE_WORDS, table.label_token(element, label_idx)])


def compose_soft(
    element: Element,
    label_idx: int,
    prefix: SoftPrefix,
    table: TokenEmbeddingTable,
) -> Tensor:
    """
    Trainable prefix followed by the frozen label embedding, [p + 1, d]

    Raises:
        ContractError: prefix belongs to another element
    """
    if prefix.element is not element:
        raise ContractError(
            f"Prefix for {prefix.element.value} used with element {element.value}"
        )
    return concat([prefix.vectors, table.rows([table.label_token(element, label_idx)])], axis=0)


def compose_soft_pair(
    state_idx: int,
    object_idx: int,
    prefix: SoftPrefix,
    table: TokenEmbeddingTable,
) -> Tensor:
    """Trainable prefix followed by the state and object embeddings, [p + 2, d]"""
    if prefix.element is not Element.PAIR:
        raise ContractError(f"Prefix for {prefix.element.value} used with element pair")
    labels = table.rows([table.states[state_idx], table.objects[object_idx]])
    return concat([prefix.vectors, labels], axis=0)


def class_labels(element: Element, space: CompositionSpace, pair_ids: Optional[Sequence[int]] = None) -> List[int]:
    """Class ids of an element: pair ids for the pair, primitive ids otherwise"""
    if element is Element.PAIR:
        return list(range(space.n_pairs)) if pair_ids is None else [int(p) for p in pair_ids]
    if element is Element.ATTR:
        return list(range(space.n_states))
    return list(range(space.n_objects))


def class_prompts(
    element: Element,
    form: PromptForm,
    space: CompositionSpace,
    bank: PromptBank,
    pair_ids: Optional[Sequence[int]] = None,
) -> Dict[PromptForm, List[Tensor]]:
    """
    Per-class prompt sequences, tagged by single form

    Hard and Soft give one sequence per class; HardPlusSoft gives both.
    """
    prompts: Dict[PromptForm, List[Tensor]] = {}
    labels = class_labels(element, space, pair_ids)
    for part in form.parts:
        seqs = []
        for label in labels:
            if element is Element.PAIR:
                s, o = space.pair_of(label)
                seqs.append(
                    compose_hard_pair(s, o, bank.table) if part is PromptForm.HARD
                    else compose_soft_pair(s, o, bank.prefix(element), bank.table)
                )
            elif part is PromptForm.HARD:
                seqs.append(compose_hard_single(element, label, bank.table))
            else:
                seqs.append(compose_soft(element, label, bank.prefix(element), bank.table))
        prompts[part] = seqs
    return prompts


def class_prompt_tensor(
    element: Element,
    form: PromptForm,
    space: CompositionSpace,
    bank: PromptBank,
    pair_ids: Optional[Sequence[int]] = None,
) -> Tensor:
    """
    All class prompts of one single form stacked into [C, L, d]

    Equivalent to stacking ``class_prompts`` output, with one tape node per
    piece instead of one per class.
    """
    if form is PromptForm.HARD_SOFT:
        raise ContractError("class_prompt_tensor takes a single form")
    table = bank.table
    labels = class_labels(element, space, pair_ids)

    if element is Element.PAIR:
        label_tokens = [[table.states[s], table.objects[o]] for s, o in map(space.pair_of, labels)]
    else:
        label_tokens = [[table.label_token(element, label)] for label in labels]

    if form is PromptForm.HARD:
        index = [[table.index(t) for t in (*TEMPLATE_WORDS, *toks)] for toks in label_tokens]
        return Tensor(table.embeddings.data[np.array(index)])

    prefix = bank.prefix(element)
    index = np.array([[table.index(t) for t in toks] for toks in label_tokens])
    n_classes = len(labels)
    shared = broadcast_to(prefix.vectors, (n_classes, prefix.length, table.d))
    return concat([shared, Tensor(table.embeddings.data[index])], axis=1)
