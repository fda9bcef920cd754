"""Deterministic randomness.

One 64-bit master seed drives everything.  Each stochastic purpose
(parameter init, dropout, per-sample augmentation, shuffling, corpus
synthesis) gets its own stream whose seed is derived from the master
seed plus a purpose path via splitmix64 mixing, so e.g. changing the
augmentation policy never perturbs parameter initialization.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, *path: int | str) -> int:
    """Fold a purpose path (strings/ints) into the master seed."""
    state = splitmix64(master & _MASK64)
    for token in path:
        if isinstance(token, str):
            for byte in token.encode("utf-8"):
                state = splitmix64(state ^ byte)
        else:
            state = splitmix64(state ^ (int(token) & _MASK64))
    return state


class RngHub:
    """Factory for named, independently seeded numpy generators."""

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)

    def stream(self, *path: int | str) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(derive_seed(self.master_seed, *path)))
