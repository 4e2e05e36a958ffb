"""Deterministic RNG derivation and worker-pool sizing."""

from __future__ import annotations

import hashlib
import os

import numpy as np


def subseed(*parts) -> np.random.Generator:
    """Derive an independent RNG stream from a tuple of hashable parts.

    Streams are a pure function of the parts (ints, strings, ...), so
    per-case generators are identical whether cases are processed serially
    or across a worker pool.
    """
    digest = hashlib.sha256(repr(parts).encode()).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence(words))


def worker_count() -> int:
    """Worker cap for parallel per-case stages (VOXFORGE_THREADS wins)."""
    env = os.environ.get("VOXFORGE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)
