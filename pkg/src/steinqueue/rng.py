"""Seeded random streams.

Every random draw in the package comes from a ``numpy.random.Generator``
derived from one 64-bit seed. The derivation is

    SeedSequence(entropy=seed, spawn_key=(module_id, replicate_id))

so a replicate's stream depends only on (seed, module, replicate) and never
on scheduling order.
"""

from __future__ import annotations

import numpy as np

MODULE_IDS = {
    "distributions": 1,
    "simulate.lindley": 2,
    "simulate.geometric": 3,
    "simulate.ladder": 4,
    "transforms.size_bias": 5,
    "transforms.equilibrium": 6,
    "transforms.couple": 7,
    "bounds.verify": 8,
    "bounds.rate": 9,
    "stein": 10,
}


def stream(seed: int, module: str, replicate: int = 0) -> np.random.Generator:
    """Return the PCG64 generator for ``(seed, module, replicate)``."""
    if module not in MODULE_IDS:
        raise KeyError(f"unknown rng module {module!r}")
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(MODULE_IDS[module], int(replicate)))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng_or_seed, module: str = "distributions") -> np.random.Generator:
    if isinstance(rng_or_seed, np.random.Generator):
        return rng_or_seed
    return stream(int(rng_or_seed), module)
