"""Seeded 64-bit key hashing shared by every filter in the package.

All filters derive their probe positions and fingerprints from a single
64-bit hash per key, so construction/query cost comparisons are not skewed
by differing hash budgets.  The hash must be stable across processes and
Python versions, which rules out the builtin ``hash``.
"""

from __future__ import annotations

import hashlib

MASK64 = (1 << 64) - 1


def hash_key(key: bytes, seed: int) -> int:
    """Return a stable, uniform 64-bit hash of ``key`` under ``seed``."""
    h = hashlib.blake2b(seed.to_bytes(8, "little") + key, digest_size=8)
    return int.from_bytes(h.digest(), "little")


def hash_key_wide(key: bytes, seed: int) -> int:
    """128-bit variant used where two independent 64-bit values are needed."""
    h = hashlib.blake2b(seed.to_bytes(8, "little") + key, digest_size=16)
    return int.from_bytes(h.digest(), "little")


def fold_sequence_hash(keys, seed: int = 0) -> int:
    """Fold an iterable of keys into one 64-bit digest.

    Used to record which exact query sequence a benchmark cell saw, so
    same-query-set fairness is checkable from reports alone.
    """
    acc = seed & MASK64
    for k in keys:
        acc = hash_key(acc.to_bytes(8, "little") + k, 0x9E3779B97F4A7C15)
    return acc
