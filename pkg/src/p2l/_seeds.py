"""Deterministic seed derivation for reproducible experiment sweeps.

Every random stream in an experiment is keyed by (master seed, repetition
index, stream label), so results are independent of execution order and
worker count. Streams are backed by the counter-based Philox generator.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# fixed labels for the per-repetition sub-streams
STREAM_DATA = 0
STREAM_MC = 1
STREAM_VOLUME = 2
STREAM_SPLIT = 3


def splitmix64(x: int) -> int:
    """One splitmix64 mixing step; a bijection on 64-bit integers."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def rep_seed(master_seed: int, rep: int) -> int:
    """Per-repetition seed: master XOR splitmix64(rep)."""
    return (master_seed & _MASK64) ^ splitmix64(rep)


def stream_rng(master_seed: int, rep: int, stream: int) -> np.random.Generator:
    """Philox generator for one (rep, stream) pair.

    The Philox key is the two-word tuple (rep_seed, stream), which makes
    streams within a repetition statistically independent without any
    sequential jumping.
    """
    key = [rep_seed(master_seed, rep), stream & _MASK64]
    return np.random.Generator(np.random.Philox(key=key))
