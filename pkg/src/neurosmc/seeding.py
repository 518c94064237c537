"""Deterministic seed derivation shared by the simulation and inference code.

Every stochastic entry point accepts either an integer seed or a
``numpy.random.SeedSequence``.  Parallel experiment drivers derive one child
sequence per (trial, purpose) pair with :func:`derive_seed`, so results are
identical no matter how trials are distributed over workers.
"""

import numpy as np

__all__ = ["as_seed_sequence", "derive_seed"]


def as_seed_sequence(seed):
    """Wrap an int (or None) in a SeedSequence; pass SeedSequences through."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def derive_seed(master, *key):
    """Child SeedSequence of ``master`` addressed by a tuple of indices.

    Distinct keys give statistically independent streams; the mapping is
    pure, so any process can rebuild the stream for (say) trial 17 without
    generating the preceding sixteen.  A SeedSequence master is extended by
    appending ``key`` to its spawn key.
    """
    key = tuple(int(k) for k in key)
    if isinstance(master, np.random.SeedSequence):
        return np.random.SeedSequence(entropy=master.entropy,
                                      spawn_key=tuple(master.spawn_key) + key)
    master = 0 if master is None else int(master)
    return np.random.SeedSequence(entropy=master, spawn_key=key)
