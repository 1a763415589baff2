"""Adaptive quotient filter: fingerprint extension on false-positive feedback.

The in-memory state is a quotient filter of p-bit anchors plus a side table
of fingerprint extensions; the reverse map (fingerprint identity -> original
keys) is the logically disk-resident component, touched only on inserts and
adaptations, and is excluded from in-memory size accounting.

A stored fingerprint's identity is (anchor, extension bits, extension
length).  Reporting a false positive extends every colliding fingerprint by
the next r bits of its *original* key's hash, repeatedly, until it no longer
prefix-matches the reported key.  When two keys chained under one identity
diverge in the newly revealed bits, the group splits.  When a stored key's
64-bit hash is consumed entirely, the key moves to an exact overflow set and
the reported negative is recorded in an exact rejected set, so adaptivity
stays monotone even under full hash collisions.

New keys inserted under an already-adapted anchor are stored at the anchor's
historical maximum extension depth rather than at depth zero; otherwise every
insert would reopen the anchor to all previously corrected negatives.  A
correction can still be undone if a later insert's hash agrees with the
corrected key through the whole stored depth, which has probability 2^-depth
per insert.
"""

from __future__ import annotations

import time
from typing import Callable

from .hashing import hash_key
from .quotient import FingerprintScheme, QuotientFilter

# per side-table entry: anchor reference plus a length field
EXT_ENTRY_OVERHEAD_BITS = 64
# per exact-key entry in the overflow / rejected sets
EXACT_KEY_OVERHEAD_BITS = 64


class ReverseMap:
    """Maps stored fingerprint identities to the original inserted keys.

    Chains multiple keys per identity.  In a production deployment this is
    the backing database; here it is an in-memory dict whose size is
    reported separately and never counted against the filter budget.
    """

    def __init__(self):
        self._entries: dict[tuple[int, int, int], list[bytes]] = {}

    def add(self, identity: tuple[int, int, int], key: bytes) -> None:
        chain = self._entries.setdefault(identity, [])
        if key not in chain:
            chain.append(key)

    def lookup(self, identity: tuple[int, int, int]) -> list[bytes]:
        return self._entries.get(identity, [])

    def pop(self, identity: tuple[int, int, int]) -> list[bytes]:
        return self._entries.pop(identity, [])

    def contains_key(self, identity: tuple[int, int, int], key: bytes) -> bool:
        return key in self._entries.get(identity, ())

    def __len__(self) -> int:
        return len(self._entries)

    def items(self):
        return self._entries.items()

    def size_bits(self) -> int:
        total = 0
        for (_, _, ext_len), keys in self._entries.items():
            total += EXT_ENTRY_OVERHEAD_BITS + ext_len
            total += sum(EXACT_KEY_OVERHEAD_BITS + 8 * len(k) for k in keys)
        return total


class ExtensionStore:
    """In-memory side table: anchor fingerprint -> extension groups.

    An anchor absent from the table has one implicit zero-length group.  An
    anchor mapped to an empty list had all its groups exhausted into the
    exact overflow set.
    """

    def __init__(self):
        self._exts: dict[int, list[tuple[int, int]]] = {}
        self.overflow: set[bytes] = set()   # inserted keys with exhausted hashes
        self.rejected: set[bytes] = set()   # negatives recorded at exhaustion

    def groups(self, anchor: int) -> list[tuple[int, int]] | None:
        return self._exts.get(anchor)

    def set_groups(self, anchor: int, groups: list[tuple[int, int]]) -> None:
        self._exts[anchor] = groups

    def size_bits(self) -> int:
        total = 0
        for groups in self._exts.values():
            for _, ext_len in groups:
                total += EXT_ENTRY_OVERHEAD_BITS + ext_len
        for k in self.overflow:
            total += EXACT_KEY_OVERHEAD_BITS + 8 * len(k)
        for k in self.rejected:
            total += EXACT_KEY_OVERHEAD_BITS + 8 * len(k)
        return total


class AdaptiveQF:
    """Quotient filter + reverse map + monotone fingerprint extension."""

    def __init__(
        self,
        scheme: FingerprintScheme,
        seed: int,
        hash_fn: Callable[[bytes, int], int] | None = None,
        clock=None,
    ):
        self.scheme = scheme
        self.seed = seed
        self.base = QuotientFilter(scheme, seed)
        self.ext = ExtensionStore()
        self.rmap = ReverseMap()
        self.n_keys = 0
        self._hash_fn = hash_fn or hash_key
        # historical max extension depth per adapted anchor; new inserts
        # under the anchor start at this depth
        self._anchor_depth: dict[int, int] = {}
        self._clock = clock  # optional bench hook for reverse-map timing

    @property
    def epsilon(self) -> float:
        """Target FPR implied by the scheme."""
        return 2.0 ** -self.scheme.r

    def _hash(self, key: bytes) -> int:
        return self._hash_fn(key, self.seed)

    def _ext_bits(self, h: int, start_len: int, length: int) -> int:
        """Hash bits in [p + start_len, p + start_len + length)."""
        p = self.scheme.p
        shift = 64 - p - start_len - length
        return (h >> shift) & ((1 << length) - 1)

    @staticmethod
    def _matches(group: tuple[int, int], h: int, p: int) -> bool:
        ext, ext_len = group
        if ext_len == 0:
            return True
        return (h >> (64 - p - ext_len)) & ((1 << ext_len) - 1) == ext

    # -- operations --------------------------------------------------------

    def insert(self, key: bytes) -> bool:
        h = self._hash(key)
        fq, fr = self.scheme.split(h)
        anchor = self.scheme.fingerprint(h)
        p = self.scheme.p

        if not self.base.query_fingerprint(fq, fr):
            if not self.base.insert_fingerprint(fq, fr):
                return False
        depth = self._anchor_depth.get(anchor, 0)

        groups = self.ext.groups(anchor)
        t0 = time.perf_counter_ns() if self._clock else 0
        if groups is None:
            if depth == 0:
                self.rmap.add((anchor, 0, 0), key)
            else:
                ext = self._ext_bits(h, 0, depth)
                self.ext.set_groups(anchor, [(ext, depth)])
                self.rmap.add((anchor, ext, depth), key)
        else:
            match = next(
                (g for g in groups if self._matches(g, h, p)), None
            )
            if match is not None:
                self.rmap.add((anchor,) + match, key)
            else:
                ext = self._ext_bits(h, 0, depth)
                groups.append((ext, depth))
                self.rmap.add((anchor, ext, depth), key)
        if self._clock:
            self._clock.add("reverse_map_updates", time.perf_counter_ns() - t0)

        self.n_keys += 1
        self.ext.rejected.discard(key)
        return True

    def query(self, key: bytes) -> bool:
        if key in self.ext.overflow:
            return True
        if key in self.ext.rejected:
            return False
        h = self._hash(key)
        fq, fr = self.scheme.split(h)
        if not self.base.query_fingerprint(fq, fr):
            return False
        groups = self.ext.groups(self.scheme.fingerprint(h))
        if groups is None:
            return True
        p = self.scheme.p
        return any(self._matches(g, h, p) for g in groups)

    def report_false_positive(self, key: bytes) -> bool:
        """Adapt away a confirmed false positive; returns False if the key
        queries absent or is actually inserted (defensive no-op)."""
        if not self.query(key):
            return False
        if self._is_inserted(key):
            return False
        t0 = time.perf_counter_ns() if self._clock else 0
        h_y = self._hash(key)
        anchor = self.scheme.fingerprint(h_y)
        p = self.scheme.p
        groups = self.ext.groups(anchor)
        if groups is None:
            groups = [(0, 0)]
            self.ext.set_groups(anchor, groups)
            # materialize the implicit group's reverse-map identity
            if not self.rmap.lookup((anchor, 0, 0)):
                # anchor with no stored keys cannot produce a positive
                raise AssertionError("positive anchor with empty reverse map")

        colliding = [g for g in groups if self._matches(g, h_y, p)]
        for g in colliding:
            self._extend_until_disambiguated(anchor, g, key, h_y)
        if self._clock:
            self._clock.add("reverse_map_updates", time.perf_counter_ns() - t0)
        return True

    def _extend_until_disambiguated(
        self, anchor: int, group: tuple[int, int], reported: bytes, h_y: int
    ) -> None:
        p = self.scheme.p
        r = self.scheme.r
        groups = self.ext.groups(anchor)
        work = [group]
        while work:
            ext, ext_len = work.pop()
            new_len = ext_len + r
            keys = self.rmap.pop((anchor, ext, ext_len))
            groups.remove((ext, ext_len))
            if p + new_len > 64:
                # hash exhausted: store the originals exactly and pin the
                # reported negative in the exact rejected set
                self.ext.overflow.update(keys)
                self.ext.rejected.add(reported)
                continue
            self._anchor_depth[anchor] = max(
                self._anchor_depth.get(anchor, 0), new_len
            )
            # split chained keys by their newly revealed hash bits
            by_bits: dict[int, list[bytes]] = {}
            for k in keys:
                nb = self._ext_bits(self._hash(k), ext_len, r)
                by_bits.setdefault(nb, []).append(k)
            y_bits = self._ext_bits(h_y, ext_len, r)
            for nb, chain in by_bits.items():
                new_ext = (ext << r) | nb
                new_group = (new_ext, new_len)
                groups.append(new_group)
                for k in chain:
                    self.rmap.add((anchor,) + new_group, k)
                if nb == y_bits:
                    work.append(new_group)  # still colliding: extend again

    def _is_inserted(self, key: bytes) -> bool:
        if key in self.ext.overflow:
            return True
        h = self._hash(key)
        anchor = self.scheme.fingerprint(h)
        groups = self.ext.groups(anchor)
        if groups is None:
            return self.rmap.contains_key((anchor, 0, 0), key)
        return any(
            self.rmap.contains_key((anchor,) + g, key) for g in groups
        )

    # -- accounting / audit --------------------------------------------------

    def in_memory_size_bits(self) -> int:
        """Base filter + extension side table + exact sets; excludes rmap."""
        return self.base.size_bits() + self.ext.size_bits()

    def size_bits(self) -> int:
        """Alias: size matching counts only the in-memory component."""
        return self.in_memory_size_bits()

    def reverse_map_size_bits(self) -> int:
        return self.rmap.size_bits()

    def dump_csv(self, fileobj) -> None:
        """Audit dump: one row per (fingerprint bits, extension length, key)."""
        fileobj.write("fingerprint_bits,extension_len,key_hex\n")
        p = self.scheme.p
        rows = []
        for (anchor, ext, ext_len), keys in self.rmap.items():
            bits = format(anchor, f"0{p}b") + (
                format(ext, f"0{ext_len}b") if ext_len else ""
            )
            for k in keys:
                rows.append(f"{bits},{ext_len},{k.hex()}\n")
        fileobj.writelines(sorted(rows))
