"""
Composition Space
State/object label universe, seen/unseen splits and open/closed-world candidates
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import FrozenSet, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from mfsb.utils.errors import ConfigError, SplitError
from mfsb.utils.logger import app_logger

MAX_SPLIT_ATTEMPTS = 1000

World = Literal["open", "closed"]
Phase = Literal["val", "test"]
SampleRef = Tuple[int, int]  # (sample_id, pair_id)


@dataclass(frozen=True)
class CompositionSpace:
    """C = A x O with synthetic names; pair_id = state * n_objects + object"""
    states: Tuple[str, ...]
    objects: Tuple[str, ...]
    seed: int = 0

    def __post_init__(self):
        if len(set(self.states)) != len(self.states):
            raise ConfigError("State names must be unique", key="n_states")
        if len(set(self.objects)) != len(self.objects):
            raise ConfigError("Object names must be unique", key="n_objects")

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_objects(self) -> int:
        return len(self.objects)

    @property
    def n_pairs(self) -> int:
        return self.n_states * self.n_objects

    @property
    def pairs(self) -> List[Tuple[int, int]]:
        return [self.pair_of(p) for p in range(self.n_pairs)]

    def pair_id(self, state: int, obj: int) -> int:
        if not (0 <= state < self.n_states and 0 <= obj < self.n_objects):
            raise IndexError(f"Pair ({state}, {obj}) outside {self.n_states}x{self.n_objects}")
        return state * self.n_objects + obj

    def pair_of(self, pair_id: int) -> Tuple[int, int]:
        if not 0 <= pair_id < self.n_pairs:
            raise IndexError(f"Pair id {pair_id} outside [0, {self.n_pairs})")
        return divmod(int(pair_id), self.n_objects)

    def pair_name(self, pair_id: int) -> Tuple[str, str]:
        s, o = self.pair_of(pair_id)
        return self.states[s], self.objects[o]


def _names(prefix: str, count: int) -> Tuple[str, ...]:
    width = max(2, len(str(count - 1)))
    return tuple(f"{prefix}{i:0{width}d}" for i in range(count))


def generate_space(n_states: int, n_objects: int, seed: int = 0) -> CompositionSpace:
    """
    Build the synthetic composition space

    Raises:
        ConfigError: fewer than two states or objects (no unseen split possible)
    """
    if n_states < 2:
        raise ConfigError(f"n_states must be >= 2, got {n_states}", key="n_states")
    if n_objects < 2:
        raise ConfigError(f"n_objects must be >= 2, got {n_objects}", key="n_objects")
    return CompositionSpace(states=_names("s", n_states), objects=_names("o", n_objects), seed=seed)


@dataclass(frozen=True)
class Split:
    """Seen/unseen partition and the sample lists drawn from it"""
    seen: FrozenSet[int]
    unseen: FrozenSet[int]
    train: List[SampleRef] = field(default_factory=list)
    val: List[SampleRef] = field(default_factory=list)
    test: List[SampleRef] = field(default_factory=list)
    val_unseen: FrozenSet[int] = frozenset()
    test_unseen: FrozenSet[int] = frozenset()

    @property
    def seen_pairs(self) -> List[int]:
        """Seen pair ids in ascending order; index = training pair target"""
        return sorted(self.seen)

    def samples(self, phase: str) -> List[SampleRef]:
        if phase not in ("train", "val", "test"):
            raise ConfigError(f"Unknown phase: {phase}")
        return getattr(self, phase)

    def phase_unseen(self, phase: Phase) -> FrozenSet[int]:
        return self.val_unseen if phase == "val" else self.test_unseen


def _uncovered(space: CompositionSpace, seen: Sequence[int]) -> Optional[str]:
    states, objects = set(), set()
    for p in seen:
        s, o = space.pair_of(p)
        states.add(s)
        objects.add(o)
    for s in range(space.n_states):
        if s not in states:
            return space.states[s]
    for o in range(space.n_objects):
        if o not in objects:
            return space.objects[o]
    return None


def make_split(
    space: CompositionSpace,
    unseen_fraction: float,
    samples_per_seen_pair: int,
    seed: int,
    eval_samples_per_pair: int = 5,
) -> Split:
    """
    Sample unseen pairs under primitive coverage and lay out sample lists

    Unseen pairs are divided between validation and test; a lone unseen pair
    is shared by both. Sample ids run consecutively through train, val, test.

    Args:
        space: Composition space
        unseen_fraction: Share of pairs held out, strictly between 0 and 1
        samples_per_seen_pair: Training samples per seen pair
        seed: Split seed
        eval_samples_per_pair: Validation/test samples per pair

    Returns:
        Split

    Raises:
        ConfigError: fraction outside (0, 1) or non-positive sample counts
        SplitError: coverage unsatisfiable within the retry budget
    """
    if not 0.0 < unseen_fraction < 1.0:
        raise ConfigError(f"unseen_fraction must be in (0, 1), got {unseen_fraction}", key="unseen_fraction")
    if samples_per_seen_pair < 1:
        raise ConfigError("samples_per_pair must be >= 1", key="samples_per_pair")
    if eval_samples_per_pair < 1:
        raise ConfigError("eval_samples_per_pair must be >= 1", key="eval_samples_per_pair")

    n_pairs = space.n_pairs
    n_unseen = int(np.floor(unseen_fraction * n_pairs + 0.5))
    n_unseen = min(max(1, n_unseen), n_pairs - 1)
    rng = np.random.default_rng(seed)

    unseen: Optional[List[int]] = None
    missing: Optional[str] = None
    for attempt in range(MAX_SPLIT_ATTEMPTS):
        candidate = sorted(int(p) for p in rng.choice(n_pairs, size=n_unseen, replace=False))
        held = set(candidate)
        missing = _uncovered(space, [p for p in range(n_pairs) if p not in held])
        if missing is None:
            unseen = candidate
            break
    if unseen is None:
        raise SplitError(
            f"No split covers every primitive after {MAX_SPLIT_ATTEMPTS} attempts; "
            f"'{missing}' never appears in a seen pair",
            primitive=missing,
        )

    seen = [p for p in range(n_pairs) if p not in set(unseen)]
    order = [unseen[i] for i in rng.permutation(len(unseen))]
    if len(order) == 1:
        val_unseen = test_unseen = frozenset(order)
    else:
        half = len(order) // 2
        val_unseen, test_unseen = frozenset(order[:half]), frozenset(order[half:])

    next_id = 0

    def draw(pairs: Sequence[int], per_pair: int) -> List[SampleRef]:
        nonlocal next_id
        refs = []
        for p in sorted(pairs):
            for _ in range(per_pair):
                refs.append((next_id, p))
                next_id += 1
        return refs

    train = draw(seen, samples_per_seen_pair)
    val = draw(seen + sorted(val_unseen), eval_samples_per_pair)
    test = draw(seen + sorted(test_unseen), eval_samples_per_pair)

    app_logger.debug(
        "split_created",
        n_seen=len(seen),
        n_unseen=len(unseen),
        attempts=attempt + 1,
        train=len(train),
        val=len(val),
        test=len(test),
    )

    return Split(
        seen=frozenset(seen),
        unseen=frozenset(unseen),
        train=train,
        val=val,
        test=test,
        val_unseen=val_unseen,
        test_unseen=test_unseen,
    )


def candidate_set(
    space: CompositionSpace,
    split: Split,
    world: World,
    phase: Phase = "test",
) -> List[int]:
    """
    Pair ids the classifier chooses among

    Open world: every pair. Closed world: seen pairs plus the unseen pairs
    labelled in ``phase``.
    """
    if world == "open":
        return list(range(space.n_pairs))
    if world == "closed":
        return sorted(split.seen | split.phase_unseen(phase))
    raise ConfigError(f"Unknown world: {world}", key="world")


MANIFEST_COLUMNS = ["pair_id", "state", "object", "status", "split"]


def split_manifest(space: CompositionSpace, split: Split) -> pd.DataFrame:
    """One row per (pair, split the pair occurs in)"""
    rows = []
    for phase in ("train", "val", "test"):
        for p in sorted({pair for _, pair in split.samples(phase)}):
            state, obj = space.pair_name(p)
            rows.append({
                "pair_id": p,
                "state": state,
                "object": obj,
                "status": "seen" if p in split.seen else "unseen",
                "split": phase,
            })
    return pd.DataFrame(rows, columns=MANIFEST_COLUMNS)


def write_manifest(space: CompositionSpace, split: Split, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    split_manifest(space, split).to_csv(path, sep="\t", header=False, index=False)
    return path


def read_manifest(path: Path) -> pd.DataFrame:
    return pd.read_csv(
        path,
        sep="\t",
        header=None,
        names=MANIFEST_COLUMNS,
        dtype={"pair_id": int, "state": str, "object": str, "status": str, "split": str},
    )
