"""Deterministic derivation of per-realization RNG streams.

Each realization draws its own Generator seeded by a counter-based hash of
(master seed, realization index); streams are collision-free in practice,
stable across platforms and runs, and independent of any batching or worker
assignment.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["seed_stream", "stream_rng"]

_PREFIX = b"fracsync-seed-v1:"


def seed_stream(master: int, realization: int) -> int:
    """64-bit seed derived from SHA-256 over master and realization index."""
    msg = _PREFIX + f"{int(master)}:{int(realization)}".encode()
    digest = hashlib.sha256(msg).digest()
    return int.from_bytes(digest[:8], "little")


def stream_rng(master: int, realization: int) -> np.random.Generator:
    return np.random.default_rng(seed_stream(master, realization))
