"""Counter-based random streams.

Every Brownian coefficient path is drawn from its own Philox stream keyed by
``(seed, mode)``; the step index is the stream position. Adding modes or
extending the horizon therefore never reshuffles existing increments.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def philox(seed: int, *key: int) -> np.random.Generator:
    """Generator on a Philox stream keyed by ``seed`` and up to one extra word."""
    if len(key) > 1:
        raise ValueError("philox takes at most one extra key word")
    words = [int(seed) & _MASK64, (int(key[0]) if key else 0) & _MASK64]
    return np.random.Generator(np.random.Philox(key=np.array(words, dtype=np.uint64)))


def standard_normals(seed: int, mode: int, count: int) -> np.ndarray:
    """First ``count`` standard normals of the stream for ``(seed, mode)``."""
    return philox(seed, mode).standard_normal(count)


def derive_seed(master: int, replicate: int, path: int) -> int:
    """Seed for replicate ``replicate``, path ``path`` of a run with ``master``.

    Uses numpy's SeedSequence hashing, which is stable across numpy releases.
    """
    ss = np.random.SeedSequence([int(master) & _MASK64, int(replicate), int(path)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
