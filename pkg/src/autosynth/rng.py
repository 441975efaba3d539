"""Seed derivation and random-generator plumbing.

Every random decision in the package flows from a single root seed.
Sub-streams (one per object, per trial, per policy) are derived with
:func:`derive_seed`, a stable hash of the root seed plus context parts, so
results are reproducible and independent of evaluation order.
"""

from __future__ import annotations

import hashlib

import numpy as np

SeedLike = int | np.random.Generator | None


def derive_seed(*parts: int | str | bytes) -> int:
    """Stable 64-bit seed from a sequence of context parts.

    Parts are length-prefixed before hashing so ("ab", "c") and ("a", "bc")
    derive different seeds.
    """
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, int):
            data = part.to_bytes(16, "little", signed=True)
        elif isinstance(part, str):
            data = part.encode("utf-8")
        else:
            data = part
        h.update(len(data).to_bytes(4, "little"))
        h.update(data)
    return int.from_bytes(h.digest()[:8], "little")


def as_generator(seed: SeedLike) -> np.random.Generator:
    """Coerce an int seed, an existing generator, or None into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
