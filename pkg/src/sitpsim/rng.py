"""Deterministic stream derivation on top of the Philox counter-based PRNG.

Every random draw in the package comes from a Generator obtained through
substream(). Given (master_seed, *path) the stream is fully determined, so
work split into blocks keyed by block index produces identical results for
any worker count or scheduling order.
"""

import numpy as np

# Fixed stream-id tags; never renumber, or archived runs stop reproducing.
TAG_FIELD_PATTERN = 1
TAG_PAYLOAD = 2
TAG_LOSS_SIM = 3
TAG_LATENCY = 4
TAG_BURST = 5
TAG_QAM = 6
TAG_PERMUTATION = 7
TAG_FEATURES = 8


def substream(master_seed, *path):
    """Independent Generator for (master_seed, *path).

    Path elements must be non-negative integers (tags, block indices, grid
    indices, ...). The SeedSequence spreads them into a Philox key.
    """
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF]
    entropy.extend(int(p) for p in path)
    ss = np.random.SeedSequence(entropy)
    key = ss.generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
