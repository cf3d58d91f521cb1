"""Seeded random streams: one counter-based generator per ``(seed, *keys)``."""

from __future__ import annotations

import numpy as np


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError("seed must be an integer")
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return int(seed)


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Philox generator keyed by ``seed`` and the replicate path ``keys``.

    Streams for different keys are independent and do not depend on the
    order in which they are created.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([check_seed(seed), *keys])))
