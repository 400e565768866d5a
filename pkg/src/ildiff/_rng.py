"""Seed derivation for per-group initialization."""

import hashlib

import torch


def derive_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & ((1 << 63) - 1)


def seeded(seed, label: str, factory):
    """Call ``factory`` under a private torch RNG seeded from (seed, label).

    ``seed=None`` uses the ambient RNG.
    """
    if seed is None:
        return factory()
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(derive_seed(seed, label))
        return factory()
