"""Deterministic RNG streams.

One 64-bit run seed drives everything (parameter init, dropout masks,
shuffling, data synthesis) through named Philox streams, so identical
seeds give bit-identical runs on one platform. Philox is counter-based;
distinct stream ids give statistically independent streams.
"""

import numpy as np

# stream ids; keep stable, they are part of the determinism contract
INIT = 1
DROPOUT = 2
SHUFFLE = 3
SYNTH = 4


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), *map(int, stream)])
    return np.random.Generator(np.random.Philox(ss))
