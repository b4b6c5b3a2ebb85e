"""Explicit random streams.

Every stochastic routine takes a seed or a ``numpy.random.Generator``.
Integer seeds map to a counter-based Philox stream so results are
reproducible bit for bit; there is no global generator.
"""

from __future__ import annotations

import numpy as np


def as_generator(seed=None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        seed = 0
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def spawn(seed, n: int) -> list[np.random.Generator]:
    """``n`` independent child streams derived from ``seed``."""
    if isinstance(seed, np.random.Generator):
        seqs = seed.bit_generator.seed_seq.spawn(n)
    else:
        seqs = np.random.SeedSequence(0 if seed is None else seed).spawn(n)
    return [np.random.Generator(np.random.Philox(s)) for s in seqs]
