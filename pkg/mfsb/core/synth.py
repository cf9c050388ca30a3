"""
Synthetic Data
Image features with planted additive state/object structure
"""

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from mfsb.core.composition import CompositionSpace, Split
from mfsb.utils.errors import ConfigError, DegenerateInputError
from mfsb.utils.logger import app_logger

MIN_D_IN = 8
PHASES = ("train", "val", "test")
HEADER_PATTERN = re.compile(
    r"^# mfsb-dataset n=(?P<n>\d+) d_in=(?P<d_in>\d+) sigma=(?P<sigma>\S+) seed=(?P<seed>-?\d+)$"
)


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegenerateInputError("Cannot normalize a zero vector")
    return matrix / norms


@dataclass(frozen=True)
class GeneratorSpec:
    """Ground-truth primitive directions; a sample is the noisy normalized sum"""
    latent_state: np.ndarray
    latent_object: np.ndarray
    noise_sigma: float = 0.1
    seed: int = 0
    mix: str = "additive"

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0", key="noise_sigma")

    @property
    def d_in(self) -> int:
        return self.latent_state.shape[1]

    def latent_sum(self, state: int, obj: int) -> np.ndarray:
        return self.latent_state[state] + self.latent_object[obj]


def build_generator(
    space: CompositionSpace,
    d_in: int,
    seed: int,
    noise_sigma: float = 0.1,
) -> GeneratorSpec:
    """
    Draw unit-norm latent rows for every state and object

    Raises:
        ConfigError: d_in below 8
    """
    if d_in < MIN_D_IN:
        raise ConfigError(f"d_in must be >= {MIN_D_IN}, got {d_in}", key="d_in")
    rng = np.random.default_rng(seed)
    latent_state = _unit_rows(rng.normal(size=(space.n_states, d_in)))
    latent_object = _unit_rows(rng.normal(size=(space.n_objects, d_in)))
    return GeneratorSpec(latent_state, latent_object, noise_sigma=noise_sigma, seed=seed)


@dataclass(frozen=True)
class Sample:
    sample_id: int
    features: np.ndarray
    pair: Tuple[int, int]
    split: str = "train"


def synthesize_sample(
    pair: Tuple[int, int],
    gen: GeneratorSpec,
    seed: int,
    noise_sigma: Optional[float] = None,
    sample_id: int = 0,
    split: str = "train",
) -> Sample:
    """
    normalize(latent_state[s] + latent_object[o] + eps), eps ~ N(0, sigma^2 I)

    The noise stream is keyed by (seed, state, object, sample_id), so any
    sample can be regenerated on its own.
    """
    s, o = pair
    sigma = gen.noise_sigma if noise_sigma is None else noise_sigma
    if sigma < 0:
        raise ConfigError("noise_sigma must be >= 0", key="noise_sigma")
    x = gen.latent_sum(s, o)
    if sigma > 0:
        rng = np.random.default_rng([int(seed), int(s), int(o), int(sample_id)])
        x = x + rng.normal(0.0, sigma, size=gen.d_in)
    return Sample(sample_id=int(sample_id), features=_unit_rows(x), pair=(int(s), int(o)), split=split)


@dataclass
class Dataset:
    """Samples of each phase, in split order"""
    train: List[Sample] = field(default_factory=list)
    val: List[Sample] = field(default_factory=list)
    test: List[Sample] = field(default_factory=list)
    noise_sigma: float = 0.0
    seed: int = 0

    def samples(self, phase: str) -> List[Sample]:
        if phase not in PHASES:
            raise ConfigError(f"Unknown phase: {phase}")
        return getattr(self, phase)

    def features(self, phase: str) -> np.ndarray:
        samples = self.samples(phase)
        if not samples:
            return np.zeros((0, 0))
        return np.stack([s.features for s in samples])

    def pair_ids(self, phase: str, space: CompositionSpace) -> np.ndarray:
        return np.array([space.pair_id(*s.pair) for s in self.samples(phase)], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.train) + len(self.val) + len(self.test)


def materialize_dataset(
    space: CompositionSpace,
    split: Split,
    gen: GeneratorSpec,
    noise_sigma: Optional[float],
    seed: int,
) -> Dataset:
    """Generate one sample per split entry; train holds seen pairs only"""
    sigma = gen.noise_sigma if noise_sigma is None else noise_sigma
    data = Dataset(noise_sigma=sigma, seed=seed)
    for phase in PHASES:
        samples = data.samples(phase)
        for sample_id, pair_id in split.samples(phase):
            samples.append(
                synthesize_sample(space.pair_of(pair_id), gen, seed, sigma, sample_id=sample_id, split=phase)
            )
    app_logger.debug(
        "dataset_materialized",
        train=len(data.train),
        val=len(data.val),
        test=len(data.test),
        sigma=sigma,
    )
    return data


def latent_sum_oracle(
    features: np.ndarray,
    gen: GeneratorSpec,
    space: CompositionSpace,
    candidates: Sequence[int],
) -> np.ndarray:
    """
    Predict, per row of ``features``, the candidate pair whose normalized latent
    sum is most cosine-similar (lowest pair id on ties)
    """
    candidates = list(candidates)
    if not candidates:
        raise ConfigError("Candidate set is empty")
    sums = _unit_rows(np.stack([gen.latent_sum(*space.pair_of(p)) for p in candidates]))
    scores = _unit_rows(np.atleast_2d(features)) @ sums.T
    return np.asarray(candidates, dtype=np.int64)[np.argmax(scores, axis=1)]


def oracle_accuracy(
    data: Dataset,
    gen: GeneratorSpec,
    space: CompositionSpace,
    candidates: Sequence[int],
    phase: str = "test",
) -> float:
    labels = data.pair_ids(phase, space)
    if labels.size == 0:
        return 0.0
    predicted = latent_sum_oracle(data.features(phase), gen, space, candidates)
    return float(np.mean(predicted == labels))


def dataset_frame(data: Dataset, space: CompositionSpace) -> pd.DataFrame:
    rows = []
    for phase in PHASES:
        for sample in data.samples(phase):
            row: Dict[str, str] = {
                "sample_id": str(sample.sample_id),
                "state": space.states[sample.pair[0]],
                "object": space.objects[sample.pair[1]],
                "split": phase,
            }
            row.update({f"x_{i}": repr(float(v)) for i, v in enumerate(sample.features)})
            rows.append(row)
    return pd.DataFrame(rows)


def write_dataset(data: Dataset, space: CompositionSpace, path: Path) -> Path:
    """
    Text dataset: a '# mfsb-dataset' header line, the column header, then one
    tab-separated row per sample with floats in shortest round-trip form
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d_in = data.train[0].features.size if data.train else 0
    header = f"# mfsb-dataset n={len(data)} d_in={d_in} sigma={data.noise_sigma!r} seed={data.seed}\n"
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(header)
        dataset_frame(data, space).to_csv(handle, sep="\t", index=False, lineterminator="\n")
    return path


def read_dataset(path: Path, space: CompositionSpace) -> Dataset:
    """
    Inverse of write_dataset; feature values come back bit-exact

    Raises:
        ConfigError: malformed header or names outside the space
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as handle:
        first = handle.readline().rstrip("\n")
    match = HEADER_PATTERN.match(first)
    if not match:
        raise ConfigError(f"Not an mfsb dataset file: {path}", details={"path": str(path)})

    frame = pd.read_csv(path, sep="\t", skiprows=1, dtype=str, keep_default_na=False)
    d_in = int(match["d_in"])
    state_index = {name: i for i, name in enumerate(space.states)}
    object_index = {name: i for i, name in enumerate(space.objects)}
    data = Dataset(noise_sigma=float(match["sigma"]), seed=int(match["seed"]))
    columns = [f"x_{i}" for i in range(d_in)]
    for record in frame.to_dict("records"):
        try:
            pair = (state_index[record["state"]], object_index[record["object"]])
        except KeyError as e:
            raise ConfigError(f"Dataset name {e} not in the composition space")
        features = np.array([float(record[c]) for c in columns], dtype=np.float64)
        data.samples(record["split"]).append(
            Sample(int(record["sample_id"]), features, pair, record["split"])
        )
    if len(data) != int(match["n"]):
        raise ConfigError(f"Dataset header says n={match['n']} but file has {len(data)} rows")
    return data
