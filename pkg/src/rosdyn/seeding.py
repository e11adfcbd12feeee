"""Per-operation seeds derived from one global seed."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(global_seed: int, operation: str) -> int:
    """Stable 63-bit seed for ``operation``; independent of call order."""
    digest = hashlib.sha256(f"{int(global_seed)}:{operation}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def rng_for(global_seed: int, operation: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(global_seed, operation))
