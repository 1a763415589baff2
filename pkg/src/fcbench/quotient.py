"""Quotient filter: p-bit fingerprints stored by quotienting.

The top p = q + r bits of a key's 64-bit hash form the fingerprint; the
high q bits select a slot (the quotient) and the next r bits are the stored
remainder.  Collisions are resolved with the Robin Hood linear-probing
layout and three metadata bits per slot:

  occupied     - some stored fingerprint has this slot index as quotient
                 (a property of the index, not of the slot's content)
  continuation - the remainder in this slot continues the run begun to its
                 left (i.e. it is not a run head)
  shifted      - the remainder in this slot is not in its canonical slot

Because remainders only ever shift right, every in-use slot carries at
least one metadata bit (a canonical run head sits on its own occupied
slot), so "meta == 0" is exactly the empty-slot test.

Runs are kept sorted by remainder, which gives set semantics at the
fingerprint level: inserting an identical fingerprint twice stores it once.
The full set of (quotient, remainder) pairs is recoverable by a decode
walk, which tests compare against a plain fingerprint-set oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

from .hashing import hash_key

QF_HEADER_BITS = 192  # scheme + seed + load counter, counted in size reports

MAX_LOAD_FACTOR = 0.95  # inserts refused beyond; keeps probe lengths bounded

_OCC = 1
_CONT = 2
_SHIFT = 4


@dataclass(frozen=True)
class FingerprintScheme:
    """The (p, q, r) split of the hash into quotient and remainder bits."""

    q: int
    r: int

    def __post_init__(self):
        if not 1 <= self.q <= 32:
            raise ValueError(f"q must be in [1, 32], got {self.q}")
        if not 1 <= self.r <= 16:
            raise ValueError(f"r must be in [1, 16], got {self.r}")
        if self.p > 48:
            raise ValueError(
                f"p = q + r must leave >= 16 hash bits for adaptation "
                f"extensions (p <= 48), got p = {self.p}"
            )

    @property
    def p(self) -> int:
        return self.q + self.r

    def split(self, h: int) -> tuple[int, int]:
        """Split a 64-bit hash into (quotient, remainder)."""
        quotient = h >> (64 - self.q)
        remainder = (h >> (64 - self.p)) & ((1 << self.r) - 1)
        return quotient, remainder

    def fingerprint(self, h: int) -> int:
        """Top p bits of the hash as one integer."""
        return h >> (64 - self.p)


def split_fingerprint(h: int, scheme: FingerprintScheme) -> tuple[int, int]:
    return scheme.split(h)


class QuotientFilter:
    """2^q slots of (r-bit remainder, 3 metadata bits)."""

    def __init__(self, scheme: FingerprintScheme, seed: int):
        self.scheme = scheme
        self.seed = seed
        self.size = 1 << scheme.q
        self._mask = self.size - 1
        self._remainders = [0] * self.size
        self._meta = bytearray(self.size)
        self.load = 0
        self.capacity = int(MAX_LOAD_FACTOR * self.size)

    # -- fingerprint-level interface --------------------------------------

    def _find_run_start(self, fq: int) -> int:
        """Start slot of the run for quotient fq (occupied[fq] must be set).

        If the run does not exist yet, returns the slot where it belongs.
        """
        meta = self._meta
        mask = self._mask
        b = fq
        while meta[b] & _SHIFT:
            b = (b - 1) & mask
        s = b
        while b != fq:
            # skip one full run for each occupied canonical slot before fq
            s = (s + 1) & mask
            while meta[s] & _CONT:
                s = (s + 1) & mask
            b = (b + 1) & mask
            while not meta[b] & _OCC:
                b = (b + 1) & mask
        return s

    def insert_fingerprint(self, fq: int, fr: int) -> bool:
        """Store (fq, fr); returns False when the filter is full."""
        meta = self._meta
        rem = self._remainders
        mask = self._mask

        if meta[fq] == 0:
            if self.load >= self.capacity:
                return False
            rem[fq] = fr
            meta[fq] = _OCC
            self.load += 1
            return True

        run_existed = bool(meta[fq] & _OCC)
        meta[fq] |= _OCC
        start = self._find_run_start(fq)
        pos = start
        if run_existed:
            # runs are sorted by remainder: walk to the insertion point
            while True:
                cur = rem[pos]
                if cur == fr:
                    return True  # already stored
                if cur > fr:
                    break
                nxt = (pos + 1) & mask
                if not meta[nxt] & _CONT:
                    pos = nxt  # append after the run's last element
                    break
                pos = nxt
        if self.load >= self.capacity:
            if not run_existed:
                meta[fq] &= ~_OCC  # roll back the speculative occupied bit
            return False
        as_run_head = pos == start

        # shift-insert: push entries right until an empty slot, each entry
        # carrying its continuation bit with it
        carry_r = fr
        carry_cont = 0 if as_run_head else _CONT
        is_new = True
        while meta[pos] != 0:
            old_r = rem[pos]
            old_cont = meta[pos] & _CONT
            if is_new and as_run_head and run_existed:
                old_cont = _CONT  # displaced run head becomes a continuation
            rem[pos] = carry_r
            meta[pos] = (meta[pos] & _OCC) | carry_cont | (
                0 if is_new and pos == fq else _SHIFT
            )
            carry_r, carry_cont = old_r, old_cont
            is_new = False
            pos = (pos + 1) & mask
        rem[pos] = carry_r
        meta[pos] = carry_cont | (0 if is_new and pos == fq else _SHIFT)
        self.load += 1
        return True

    def query_fingerprint(self, fq: int, fr: int) -> bool:
        meta = self._meta
        if not meta[fq] & _OCC:
            return False
        rem = self._remainders
        mask = self._mask
        pos = self._find_run_start(fq)
        while True:
            cur = rem[pos]
            if cur == fr:
                return True
            if cur > fr:
                return False  # runs are sorted
            pos = (pos + 1) & mask
            if not meta[pos] & _CONT:
                return False

    # -- key-level interface -----------------------------------------------

    def insert(self, key: bytes) -> bool:
        fq, fr = self.scheme.split(hash_key(key, self.seed))
        return self.insert_fingerprint(fq, fr)

    def query(self, key: bytes) -> bool:
        fq, fr = self.scheme.split(hash_key(key, self.seed))
        return self.query_fingerprint(fq, fr)

    # -- decode / audit ------------------------------------------------------

    def decode(self) -> list[tuple[int, int]]:
        """Recover every stored (quotient, remainder) pair from the layout."""
        meta = self._meta
        rem = self._remainders
        size = self.size
        # the load cap guarantees at least one empty slot to anchor the scan
        try:
            anchor = next(i for i in range(size) if meta[i] == 0)
        except StopIteration as exc:  # pragma: no cover - load cap forbids
            raise RuntimeError("no empty slot; filter over capacity") from exc
        pairs = []
        pending: list[int] = []
        current_q = -1
        for off in range(1, size + 1):
            i = (anchor + off) % size
            if meta[i] & _OCC:
                pending.append(i)
            if meta[i] == 0:
                if pending:
                    raise RuntimeError(f"dangling occupied bits at slot {i}")
                continue
            if not meta[i] & _CONT:
                if not pending:
                    raise RuntimeError(f"run head at slot {i} with no quotient")
                current_q = pending.pop(0)
            pairs.append((current_q, rem[i]))
        return sorted(pairs)

    def validate_layout(self) -> None:
        """Assert per-slot metadata consistency; raises on violation."""
        meta = self._meta
        rem = self._remainders
        for i in range(self.size):
            if meta[i] & _CONT and not meta[i] & _SHIFT:
                raise AssertionError(f"slot {i}: continuation without shifted")
        decoded = self.decode()  # raises on queue-discipline violations
        if len(decoded) != self.load:
            raise AssertionError(
                f"decode recovered {len(decoded)} pairs, load says {self.load}"
            )
        # runs must be sorted by remainder
        run: list[int] = []
        for i in range(self.size):
            if meta[i] == 0 or not meta[i] & _CONT:
                if run != sorted(run):
                    raise AssertionError("unsorted run")
                run = []
            if meta[i] != 0:
                run.append(rem[i])

    def size_bits(self) -> int:
        return self.size * (self.scheme.r + 3) + QF_HEADER_BITS
