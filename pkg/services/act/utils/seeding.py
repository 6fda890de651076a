"""
Seed plumbing.

Every random draw in a run comes from the single run seed through a named
sub-stream, so that e.g. adding a negative sample never perturbs weight
initialisation.
"""

import zlib
from typing import Union

import numpy as np
import torch


def _spawn_key(name: str, index: int) -> tuple:
    return (zlib.crc32(name.encode("utf-8")), index)


def seed_sequence(seed: int, name: str, index: int = 0) -> np.random.SeedSequence:
    """Seed sequence of the named sub-stream ``name`` (optionally indexed)."""
    return np.random.SeedSequence(entropy=int(seed), spawn_key=_spawn_key(name, index))


def numpy_rng(seed: int, name: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, name, index))


def int_seed(seed: int, name: str, index: int = 0) -> int:
    """31-bit integer seed for libraries that only take ints (sklearn, networkx)."""
    return int(seed_sequence(seed, name, index).generate_state(1, dtype=np.uint32)[0]) >> 1


def torch_generator(seed: Union[int, np.integer], name: str, index: int = 0) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(int(seed_sequence(int(seed), name, index).generate_state(1, dtype=np.uint64)[0]) >> 1)
    return generator
