"""Plain Bloom filter used standalone and as the backup stage of learned
and stacked filters.

Probe positions come from one 64-bit hash split into two halves combined by
enhanced double hashing, so a query costs a single hash call regardless
of k.
"""

from __future__ import annotations

import math

from .hashing import hash_key

# Accounted in every size_bits() report so size-matched comparisons use
# honest totals.
BLOOM_HEADER_BITS = 64

_K_MIN, _K_MAX = 1, 30


def optimal_k(m: int, n: int) -> int:
    """round(ln2 * m/n), clamped to [1, 30]."""
    if n <= 0:
        return _K_MAX
    k = round(math.log(2) * m / n)
    return max(_K_MIN, min(_K_MAX, k))


def analytic_fpr(m: int, k: int, n: int) -> float:
    """Standard estimate (1 - e^(-kn/m))^k of a Bloom filter's FPR."""
    if n == 0:
        return 0.0
    return (1.0 - math.exp(-k * n / m)) ** k


def bits_for_fpr(n: int, eps: float) -> int:
    """Bits (excluding header) a Bloom filter needs for FPR ``eps`` at ``n``
    elements: 1.44 * n * log2(1/eps)."""
    if eps >= 1.0:
        return 0
    return max(1, math.ceil(1.44 * n * math.log2(1.0 / eps)))


def probe_positions(h: int, m: int, k: int) -> list[int]:
    """k probe positions from one 64-bit hash.

    Enhanced double hashing: the triangular increment on h2 breaks the
    shared-stride correlation that biases plain (h1 + i*h2) mod m high at
    small power-of-two m.
    """
    h1 = h & 0xFFFFFFFF
    h2 = (h >> 32) | 1
    out = []
    for i in range(k):
        out.append(h1 % m)
        h1 += h2
        h2 += i + 1
    return out


class BloomFilter:
    """m-bit array probed by k derived hash positions; no false negatives."""

    __slots__ = ("m", "k", "seed", "_bits", "n_inserted")

    def __init__(self, m: int, k: int, seed: int):
        if m < 1:
            raise ValueError(f"bit array length must be >= 1, got {m}")
        if not _K_MIN <= k <= _K_MAX:
            raise ValueError(f"k must be in [{_K_MIN}, {_K_MAX}], got {k}")
        self.m = m
        self.k = k
        self.seed = seed
        self._bits = bytearray((m + 7) // 8)
        self.n_inserted = 0

    @classmethod
    def build(cls, space_bits: int, expected_n: int, seed: int) -> "BloomFilter":
        """Size a filter to a total space budget (header included)."""
        if expected_n < 1:
            raise ValueError("expected_n must be >= 1")
        m = space_bits - BLOOM_HEADER_BITS
        if m < 1:
            raise ValueError(
                f"space budget of {space_bits} bits leaves no room for the "
                f"bit array ({BLOOM_HEADER_BITS} header bits)"
            )
        return cls(m, optimal_k(m, expected_n), seed)

    @classmethod
    def build_for_fpr(cls, n: int, eps: float, seed: int) -> "BloomFilter":
        """Size a filter for target FPR ``eps`` at ``n`` elements."""
        m = bits_for_fpr(max(1, n), eps)
        return cls(m, optimal_k(m, max(1, n)), seed)

    def _probes(self, key: bytes):
        return probe_positions(hash_key(key, self.seed), self.m, self.k)

    def insert(self, key: bytes) -> None:
        bits = self._bits
        for pos in self._probes(key):
            bits[pos >> 3] |= 1 << (pos & 7)
        self.n_inserted += 1

    def query(self, key: bytes) -> bool:
        # probe generation fused with testing: no list, early exit
        h = hash_key(key, self.seed)
        h1 = h & 0xFFFFFFFF
        h2 = (h >> 32) | 1
        bits = self._bits
        m = self.m
        for i in range(self.k):
            pos = h1 % m
            if not bits[pos >> 3] & (1 << (pos & 7)):
                return False
            h1 += h2
            h2 += i + 1
        return True

    def insert_many(self, keys) -> None:
        for k in keys:
            self.insert(k)

    def analytic_fpr(self, n: int | None = None) -> float:
        return analytic_fpr(self.m, self.k, self.n_inserted if n is None else n)

    def realized_fpr(self) -> float:
        """(set-bit fraction)^k: the closed form evaluated at the actual
        fill, which removes construction variance from comparisons."""
        ones = sum(int(b).bit_count() for b in self._bits)
        return (ones / self.m) ** self.k

    def size_bits(self) -> int:
        return self.m + BLOOM_HEADER_BITS
