"""Seeded random number generation.

Every random draw in the package comes from :func:`make_rng`, a numpy
``Generator`` on the counter-based Philox4x64 bit generator. Normals use
numpy's ziggurat sampler, so streams are reproducible bit-for-bit across
platforms for a given numpy release.

Replication seeds are derived with the SplitMix64 finaliser so that
replication ``r`` of master seed ``s`` always gets the same stream.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One SplitMix64 step: advance by the golden gamma and mix to 64 bits."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit seed for stream ``index`` of ``master_seed``."""
    return splitmix64(splitmix64(int(master_seed) & _MASK64) ^ (int(index) & _MASK64))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & _MASK64))
