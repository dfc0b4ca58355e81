"""Deterministic RNG substreams keyed by (seed, index...).

Monte-Carlo loops draw one substream per trial batch so results do not
depend on execution order or worker count.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


def complex_normal(rng: np.random.Generator, shape, scale: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian with per-entry variance scale^2."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * (scale / np.sqrt(2.0))
