"""Counter-based random streams keyed on ``(seed, replica, stream)``.

Each replica and each purpose within a replica get their own Philox stream,
so results never depend on scheduling order or thread count.
"""

import numpy as np

# stream ids within a replica
PATH = 0
INIT = 1
STATIONARY = 2
CONDITIONAL = 3

SEED_MASK = (1 << 64) - 1


def seed_sequence(seed, replica=0, stream=PATH):
    return np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=(int(replica), int(stream)))


def substream(seed, replica=0, stream=PATH):
    """Independent generator for one (seed, replica, stream) triple."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, replica, stream)))


def sub_seed(seed, replica=0, stream=PATH):
    """A 64-bit digest of the derived key, for provenance records."""
    return int(seed_sequence(seed, replica, stream).generate_state(1, np.uint64)[0])


def as_generator(rng):
    """Accept a Generator, an int seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        raise TypeError("an explicit generator or integer seed is required")
    return substream(rng)
