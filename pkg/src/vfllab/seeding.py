"""Deterministic RNG derivation.

Every random draw in the package comes from a generator derived here, so a
single master seed pins the full run: data, weight init, batch shuffling,
defense noise, teacher training and attack fine-tuning all get independent
streams and never consume from each other.
"""

from __future__ import annotations

import numpy as np

# stream tags; appending further ints (epoch index, party index) is fine
DATA = 1
INIT = 2
SHUFFLE = 3
TEACHER = 4
DEFENSE = 5
ATTACK = 6


def derive_rng(master_seed: int, *tags: int) -> np.random.Generator:
    """Generator for the (master_seed, *tags) stream; same args, same stream."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, tags)]))
