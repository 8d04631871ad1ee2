"""Seeded random streams.

Every Monte Carlo loop derives one independent generator per replication
from ``(master_seed, index)`` so results do not depend on the order in
which replications are scheduled.
"""
from __future__ import annotations

from typing import Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator]


def as_generator(seed: SeedLike) -> np.random.Generator:
    """Return a PCG64 generator for an int seed or a seed sequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    if seed is None or int(seed) < 0:
        raise ValueError("an explicit nonnegative integer seed is required")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def substream(master_seed: int, *index: int) -> np.random.SeedSequence:
    """Seed sequence for replication ``index`` under ``master_seed``.

    The spawn key encodes the index path, so ``substream(s, 3)`` is the
    same stream whether it is requested first or last.
    """
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(i) for i in index))


def substream_seed(master_seed: int, *index: int) -> int:
    """A 63-bit integer seed drawn from :func:`substream`."""
    return int(substream(master_seed, *index).generate_state(2, np.uint64)[0] >> np.uint64(1))
