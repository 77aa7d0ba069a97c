"""Reproducible random streams.

All randomness in the package flows through Philox, a counter-based
generator. Independent streams are derived by hashing ``(seed, *path)``
through :class:`numpy.random.SeedSequence`, so a replication's stream
depends only on its index, never on execution order or thread count.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

# Fixed role tags for derived streams; keeping them distinct guarantees the
# generator never reuses a stream across pipeline stages.
GENERATE = 0
SPLIT = 1
TEST = 2
PARTITION = 3


def stream(seed: int | Sequence[int], *path: int) -> np.random.Generator:
    """Return the Philox stream identified by ``seed`` and a derivation path.

    Parameters
    ----------
    seed : int or sequence of ints
        Master entropy. Sequences are hashed as a whole, so
        ``stream((7, 3))`` and ``stream(7, 3)`` are different streams.
    *path : int
        Derivation path, e.g. ``stream(seed, rep_index, TEST)``.

    Same arguments always yield an identical stream; distinct paths yield
    independent streams.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
