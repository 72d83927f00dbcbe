"""Seed derivation helpers.

All randomness in the package flows through counter-based Philox streams keyed
by (seed, *spawn_key) so results are reproducible regardless of execution
order or worker count.
"""

from __future__ import annotations

import numpy as np

SeedLike = int | tuple[int, ...]


def make_generator(seed: SeedLike, *spawn_key: int) -> np.random.Generator:
    """Return a Generator on an independent Philox stream for (seed, spawn_key)."""
    entropy = seed if isinstance(seed, int) else list(seed)
    ss = np.random.SeedSequence(entropy=entropy, spawn_key=tuple(spawn_key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: SeedLike, *spawn_key: int) -> int:
    """Collapse (seed, spawn_key) into a single reproducible integer seed."""
    entropy = seed if isinstance(seed, int) else list(seed)
    ss = np.random.SeedSequence(entropy=entropy, spawn_key=tuple(spawn_key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
