"""Counter-based deterministic noise generation.

Draws are keyed by (seed, counter) through the Philox bit generator, so a
given sample is the same no matter what was drawn before it or on which
thread. Per-stream seeds are derived from a base seed with a stable hash.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(base_seed: int, stream: str, index: int = 0) -> int:
    """Stable 64-bit sub-seed for a named stream at a given tick index."""
    msg = f"{base_seed}:{stream}:{index}".encode()
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "big")


def normal_draws(seed: int, n: int, counter: int = 0) -> np.ndarray:
    """`n` standard-normal draws from the (seed, counter) cell."""
    gen = np.random.Generator(np.random.Philox(key=seed, counter=[counter, 0, 0, 0]))
    return gen.standard_normal(n)
