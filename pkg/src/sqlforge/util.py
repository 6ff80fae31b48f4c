"""Small shared helpers."""

from __future__ import annotations

import hashlib
import random


def derive_seed(seed: int, *parts: object) -> int:
    """Deterministically derive a child seed from a root seed and labels."""
    h = hashlib.blake2b(digest_size=16)
    h.update(str(seed).encode("utf-8"))
    for part in parts:
        h.update(b"|")
        h.update(str(part).encode("utf-8"))
    return int.from_bytes(h.digest(), byteorder="big", signed=False)


def derive_rng(seed: int, *parts: object) -> random.Random:
    """A fresh ``random.Random`` seeded from ``derive_seed``."""
    return random.Random(derive_seed(seed, *parts))
