"""Counter-based seed derivation.

Every random stream in a run is identified by ``(master_seed, stream, index, ...)``
so serial and parallel execution consume identical numbers.
"""

import numpy as np

# stream identifiers
TEST_TASKS = 1
TRAIN_TASKS = 2
INIT = 3
EVAL_CHAINS = 4
META_CHAINS = 5
PRETRAIN = 6
BASE_GRAPH = 7


def derive_seed(master, *keys):
    """Return a 64-bit integer seed determined by ``master`` and ``keys``."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def generator(seed, *keys):
    if keys:
        seed = derive_seed(seed, *keys)
    return np.random.default_rng(np.random.SeedSequence(int(seed)))
