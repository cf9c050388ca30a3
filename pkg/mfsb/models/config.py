"""
Experiment Configuration Models
Pydantic models for one experiment plus the flat key=value file format
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from mfsb.core.fusion import FusionConfig, FusionOrder, IntraSemantics
from mfsb.core.prompts import ELEMENT_ORDER, Element, PromptForm
from mfsb.utils.errors import ConfigError

FORM_LABELS = {
    PromptForm.HARD: "Hard",
    PromptForm.SOFT: "Soft",
    PromptForm.HARD_SOFT: "Hard+Soft",
}

ORDER_LABELS = {
    FusionOrder.NONE: "No Fusion",
    FusionOrder.INTRA: "Intra-Fusion Only",
    FusionOrder.INTER: "Inter-Fusion Only",
    FusionOrder.INTRA_INTER: "1. Intra 2. Inter",
    FusionOrder.INTER_INTRA: "1. Inter 2. Intra",
}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SpaceConfig(_Section):
    """Composition space, split and synthetic data sizes"""
    n_states: int = Field(default=8, ge=2)
    n_objects: int = Field(default=10, ge=2)
    unseen_fraction: float = Field(default=0.3, gt=0.0, lt=1.0)
    samples_per_pair: int = Field(default=10, ge=1)
    eval_samples_per_pair: int = Field(default=5, ge=1)
    noise_sigma: float = Field(default=0.1, ge=0.0)
    d_in: int = Field(default=32, ge=8)
    d: int = Field(default=16, ge=4)

    @field_validator("d")
    @classmethod
    def grid_divisible(cls, v: int) -> int:
        if v % 4 != 0:
            raise ValueError("d must be divisible by 4")
        return v


class PromptConfig(_Section):
    """Prompt form per element and the active element subset"""
    pair: PromptForm = PromptForm.HARD
    obj: PromptForm = PromptForm.SOFT
    attr: PromptForm = PromptForm.SOFT
    prefix_length: int = Field(default=3, ge=1)
    elements: Tuple[Element, ...] = ELEMENT_ORDER

    @field_validator("elements", mode="before")
    @classmethod
    def split_elements(cls, v: Any) -> Any:
        if isinstance(v, str):
            v = [part.strip() for part in v.split(",") if part.strip()]
        return v

    @field_validator("elements")
    @classmethod
    def canonical_elements(cls, v: Tuple[Element, ...]) -> Tuple[Element, ...]:
        if not v:
            raise ValueError("at least one element must be active")
        if len(set(v)) != len(v):
            raise ValueError("elements must not repeat")
        return tuple(e for e in ELEMENT_ORDER if e in set(v))

    def form(self, element: Element) -> PromptForm:
        return getattr(self, element.value)

    def forms(self) -> Dict[Element, PromptForm]:
        return {e: self.form(e) for e in self.elements}


class FusionSettings(_Section):
    order: FusionOrder = FusionOrder.INTER_INTRA
    intra_semantics: IntraSemantics = IntraSemantics.EQUATIONS
    n_heads: int = Field(default=1, ge=1)

    def to_fusion_config(self) -> FusionConfig:
        return FusionConfig(order=self.order, intra_semantics=self.intra_semantics)


class LossWeights(_Section):
    """Total-loss coefficients and the matching temperature"""
    w_pair_baseline: float = Field(default=0.1, ge=0.0)
    w_primitive_baseline: float = Field(default=0.01, ge=0.0)
    alpha: float = Field(default=0.2, ge=0.0)
    beta: float = Field(default=0.2, ge=0.0)
    gamma: float = Field(default=0.2, ge=0.0)
    temperature: float = Field(default=0.07, gt=0.0)


class TrainingConfig(_Section):
    """Adam and mini-batch schedule"""
    epochs: int = Field(default=20, ge=0)
    lr: float = Field(default=5e-3, ge=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    batch_size: int = Field(default=16, ge=1)


class EvalConfig(_Section):
    world: Literal["open", "closed", "both"] = "both"
    n_points: int = Field(default=20, ge=3)

    @property
    def worlds(self) -> List[str]:
        return ["open", "closed"] if self.world == "both" else [self.world]


class ExperimentConfig(_Section):
    """Every knob of one experiment"""
    seed: int = Field(default=0, ge=0)
    space: SpaceConfig = SpaceConfig()
    prompt: PromptConfig = PromptConfig()
    fusion: FusionSettings = FusionSettings()
    weights: LossWeights = LossWeights()
    training: TrainingConfig = TrainingConfig()
    eval: EvalConfig = EvalConfig()

    @model_validator(mode="after")
    def heads_divide_dimension(self) -> "ExperimentConfig":
        if self.space.d % self.fusion.n_heads != 0:
            raise ValueError("n_heads must divide d")
        return self

    @property
    def elements(self) -> Tuple[Element, ...]:
        return self.prompt.elements

    def method_label(self) -> str:
        """Human-readable row label, e.g. 'Hard {Pair}, Soft {Obj}, Soft {Attr} | 1. Inter 2. Intra'"""
        names = {Element.PAIR: "Pair", Element.OBJ: "Obj", Element.ATTR: "Attr"}
        parts = [
            f"{FORM_LABELS[self.prompt.form(e)]} {{{names[e]}}}"
            for e in (Element.PAIR, Element.OBJ, Element.ATTR)
            if e in self.elements
        ]
        return f"{', '.join(parts)} | {ORDER_LABELS[self.fusion.order]}"


# flat key -> (section, field); section None means a top-level field
FLAT_KEYS: Dict[str, Tuple[Optional[str], str]] = {
    "seed": (None, "seed"),
    "n_states": ("space", "n_states"),
    "n_objects": ("space", "n_objects"),
    "unseen_fraction": ("space", "unseen_fraction"),
    "samples_per_pair": ("space", "samples_per_pair"),
    "eval_samples_per_pair": ("space", "eval_samples_per_pair"),
    "noise_sigma": ("space", "noise_sigma"),
    "d_in": ("space", "d_in"),
    "d": ("space", "d"),
    "prompt.pair": ("prompt", "pair"),
    "prompt.obj": ("prompt", "obj"),
    "prompt.attr": ("prompt", "attr"),
    "prefix_length": ("prompt", "prefix_length"),
    "elements": ("prompt", "elements"),
    "fusion.order": ("fusion", "order"),
    "fusion.intra_semantics": ("fusion", "intra_semantics"),
    "n_heads": ("fusion", "n_heads"),
    "alpha": ("weights", "alpha"),
    "beta": ("weights", "beta"),
    "gamma": ("weights", "gamma"),
    "temperature": ("weights", "temperature"),
    "w_pair_baseline": ("weights", "w_pair_baseline"),
    "w_primitive_baseline": ("weights", "w_primitive_baseline"),
    "epochs": ("training", "epochs"),
    "lr": ("training", "lr"),
    "beta1": ("training", "beta1"),
    "beta2": ("training", "beta2"),
    "eps": ("training", "eps"),
    "batch_size": ("training", "batch_size"),
    "world": ("eval", "world"),
    "n_points": ("eval", "n_points"),
}

_FIELD_TO_KEY = {location: key for key, location in FLAT_KEYS.items()}


def _flat_key_of(loc: Tuple[Union[str, int], ...]) -> Optional[str]:
    """Map a pydantic error location back to the flat key"""
    if len(loc) >= 2 and isinstance(loc[0], str) and isinstance(loc[1], str):
        key = _FIELD_TO_KEY.get((loc[0], loc[1]))
        if key:
            return key
    if loc and isinstance(loc[0], str):
        return _FIELD_TO_KEY.get((None, loc[0]))
    return None


def config_from_flat(values: Dict[str, Any], lines: Optional[Dict[str, int]] = None) -> ExperimentConfig:
    """
    Build an ExperimentConfig from flat keys

    Raises:
        ConfigError: unknown key or invalid value, naming key and line
    """
    lines = lines or {}
    nested: Dict[str, Any] = {}
    for key, value in values.items():
        if key not in FLAT_KEYS:
            raise ConfigError(f"Unknown config key: {key}", key=key, line=lines.get(key))
        section, name = FLAT_KEYS[key]
        if section is None:
            nested[name] = value
        else:
            nested.setdefault(section, {})[name] = value

    try:
        return ExperimentConfig.model_validate(nested)
    except ValidationError as e:
        error = e.errors()[0]
        key = _flat_key_of(tuple(error["loc"]))
        if key is None and error["loc"] == ():
            # cross-field validator on the root model
            key = "n_heads"
        where = f" (line {lines[key]})" if key in lines else ""
        raise ConfigError(
            f"Invalid value for {key}{where}: {error['msg']}",
            key=key,
            line=lines.get(key),
        )


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment"""
    values: Dict[str, str] = {}
    lines: Dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"Line {lineno} is not key = value: {raw.strip()}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in FLAT_KEYS:
            raise ConfigError(f"Unknown config key: {key} (line {lineno})", key=key, line=lineno)
        if key in values:
            raise ConfigError(f"Duplicate config key: {key} (line {lineno})", key=key, line=lineno)
        if value == "":
            raise ConfigError(f"Empty value for {key} (line {lineno})", key=key, line=lineno)
        values[key] = value
        lines[key] = lineno
    return config_from_flat(values, lines)


def parse_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Load an experiment config file

    Raises:
        ConfigError: unreadable file, unknown key, unparsable value or violated invariant
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}", details={"path": str(path)})
    return parse_config_text(text)


def _format_value(value: Any) -> str:
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if hasattr(value, "value"):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def flat_config(config: ExperimentConfig) -> Dict[str, Any]:
    """Flat key -> value view of a config"""
    out = {}
    for key, (section, name) in FLAT_KEYS.items():
        owner = config if section is None else getattr(config, section)
        out[key] = getattr(owner, name)
    return out


def format_config(config: ExperimentConfig) -> str:
    """Render the effective config in the file syntax"""
    lines = ["# mfsb experiment config"]
    lines += [f"{key} = {_format_value(value)}" for key, value in flat_config(config).items()]
    return "\n".join(lines) + "\n"


def config_hash(config: ExperimentConfig) -> str:
    """First 16 hex characters of SHA-256 over the canonical JSON dump"""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def with_world(config: ExperimentConfig, world: str) -> ExperimentConfig:
    """Copy of ``config`` evaluated in ``world`` (open, closed or both)"""
    values = flat_config(config)
    values["world"] = world
    return config_from_flat(values)
