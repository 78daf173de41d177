"""Deterministic random streams keyed by (seed, purpose, index).

Every particle owns its own generator, derived from the run seed and the
particle index alone. Work can therefore be split across any number of
workers without changing a single draw.
"""

from __future__ import annotations

import numpy as np

# spawn-key namespaces
PARTICLES = 0
GROUND_TRUTH = 1
BANDWIDTH = 2
ANCHORS = 3


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the sub-stream ``key`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def particle_generator(seed: int, index: int) -> np.random.Generator:
    return stream(seed, PARTICLES, index)


def particle_generators(seed: int, start: int, stop: int) -> list[np.random.Generator]:
    return [particle_generator(seed, i) for i in range(start, stop)]


def draw_block(gens: list[np.random.Generator], count: int) -> np.ndarray:
    """Next ``count`` standard normals from each generator, one row per stream."""
    out = np.empty((len(gens), count))
    for row, g in zip(out, gens):
        g.standard_normal(out=row)
    return out
