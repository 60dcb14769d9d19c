# keyvote3d/utils/rng.py
"""Seeded generators for reproducible runs.

Every random draw in the library comes from a generator keyed by the run seed
plus the indices that identify the work item (keypoint, trial, stream tag), so
the numbers do not depend on evaluation order or thread scheduling.
"""
from typing import Union

import numpy as np

# Stream tags keep independent consumers of one seed apart
STREAM_SUBSAMPLE = 1
STREAM_POSE = 2
STREAM_OCCLUSION = 3
STREAM_PERTURB = 4
STREAM_TRIAL = 5
STREAM_VOTING = 6
STREAM_MODEL = 7

SeedLike = Union[int, np.integer]


def generator(*keys: SeedLike) -> np.random.Generator:
    """Generator for the key tuple; negative seeds are folded to unsigned."""
    return np.random.default_rng([int(k) & 0xFFFFFFFFFFFFFFFF for k in keys])


def derive_seed(*keys: SeedLike) -> int:
    """A 63-bit integer seed derived from the key tuple."""
    entropy = [int(k) & 0xFFFFFFFFFFFFFFFF for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))
