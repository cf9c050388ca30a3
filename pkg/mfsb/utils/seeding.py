"""
Seed Streams
One independent numpy RNG stream per concern, all derived from the experiment seed
"""

import numpy as np

STREAMS = {
    "split": 1,
    "init": 2,
    "shuffle": 3,
    "noise": 4,
    "generator": 5,
}


def stream_rng(seed: int, stream: str) -> np.random.Generator:
    """Generator for ``stream``; changing one stream's consumers never shifts another"""
    return np.random.default_rng(np.random.SeedSequence([int(seed), STREAMS[stream]]))


def stream_seed(seed: int, stream: str) -> int:
    """Integer seed for APIs that take a seed rather than a Generator"""
    state = np.random.SeedSequence([int(seed), STREAMS[stream]]).generate_state(1)
    return int(state[0])
