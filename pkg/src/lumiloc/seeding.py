"""Deterministic seed derivation.

A single master seed fans out into independent per-stage streams through
labeled hashing, so adding a new stage never perturbs the streams of
existing ones.
"""

import hashlib

import numpy as np


def derive_seed(master: int, label: str, index: int = 0) -> int:
    """Return a 64-bit seed derived from (master, label, index)."""
    digest = hashlib.sha256(f"{master}:{label}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def rng_for(master: int, label: str, index: int = 0) -> np.random.Generator:
    """Seeded generator for one named stage of a run."""
    return np.random.default_rng(derive_seed(master, label, index))
