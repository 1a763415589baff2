"""Learned filter family: threshold learned Bloom filter, Ada-BF, and PLBF.

All three route queries through a scorer and keep no false negatives: every
positive either clears the score path or sits in a backup Bloom structure.
Model bytes are charged against the same space budget as the backup bits, so
size-matched comparisons include the model.
"""

from __future__ import annotations

import math
import time
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .bloom import BLOOM_HEADER_BITS, BloomFilter, analytic_fpr, optimal_k, probe_positions
from .hashing import hash_key


@dataclass(frozen=True)
class LearnedBudget:
    """Total space split between the model and its backup filter(s)."""

    total_bits: int
    model_bits: int

    @property
    def backup_bits(self) -> int:
        return self.total_bits - self.model_bits

    def require_backup(self) -> None:
        if self.backup_bits <= 0:
            raise ValueError(
                f"model ({self.model_bits} bits) consumes the whole budget "
                f"({self.total_bits} bits); no room for backup filters"
            )


def learned_overall_fpr(f_m: float, f_b: float) -> float:
    """Composition of model and backup false positive rates."""
    if not (0 <= f_m <= 1 and 0 <= f_b <= 1):
        raise ValueError("rates must be probabilities")
    return f_m + (1 - f_m) * f_b


def learned_advantage_bound(zeta_bits, n, alpha, b, f_m, f_n):
    """Space-advantage test for a learned filter against a plain Bloom
    filter at the same budget.

    Returns (satisfied, margin, rhs) where the bound holds when
    zeta/n <= log_alpha(f_m + (1-f_m) * alpha^(b/f_n)) - b.
    A model that never misses (f_n = 0) needs no backup at all, reported as
    an unbounded margin.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    if b <= 0:
        raise ValueError("b must be > 0")
    if f_n == 0:
        return True, math.inf, math.inf
    inner = f_m + (1 - f_m) * alpha ** (b / f_n)
    rhs = math.log(inner, alpha) - b
    margin = rhs - zeta_bits / n
    return margin >= 0, margin, rhs


# -- threshold learned Bloom filter ---------------------------------------------


class LearnedBloomFilter:
    """Model-first filter: scores >= t answer present immediately, all other
    queries fall through to a backup Bloom filter holding the low-score
    positives."""

    def __init__(self, scorer, t: float, backup: BloomFilter):
        self.scorer = scorer
        self.t = t
        self.backup = backup

    @classmethod
    def build(cls, positives, scorer, t, budget: LearnedBudget, seed: int, clock=None):
        budget.require_backup()
        t0 = time.perf_counter_ns()
        low = [x for x in positives if scorer.score(x) < t]
        t1 = time.perf_counter_ns()
        backup = BloomFilter.build(budget.backup_bits, max(1, len(low)), seed)
        backup.insert_many(low)
        if clock is not None:
            clock.add("threshold_finding", t1 - t0)
            clock.add("filter_inserts", time.perf_counter_ns() - t1)
        return cls(scorer, t, backup)

    def score_stage(self, key: bytes) -> float:
        return self.scorer.score(key)

    def probe_stage(self, key: bytes, s: float) -> bool:
        return s >= self.t or self.backup.query(key)

    def query(self, key: bytes) -> bool:
        return self.probe_stage(key, self.scorer.score(key))

    def size_bits(self) -> int:
        return self.scorer.size_bytes * 8 + self.backup.size_bits()


# -- Ada-BF ----------------------------------------------------------------------


class AdaBF:
    """Shared bit array with score-dependent probe counts.

    Keys are split into K = k_max - k_min + 1 ascending-score groups; group g
    probes k_max - g positions, so the groups holding most of the negative
    mass check the most bits.  Thresholds put c times more training-negative
    mass in each group than in the next-higher-score group, with c chosen by
    grid search to minimize the estimated FPR on the training negatives.
    """

    def __init__(self, scorer, thresholds, group_hashes, m, seed, c):
        self.scorer = scorer
        self.thresholds = thresholds
        self.group_hashes = group_hashes
        self.m = m
        self.seed = seed
        self.c = c
        self._bits = bytearray((m + 7) // 8)
        self.n_inserted = 0

    @classmethod
    def build(
        cls,
        positives,
        scorer,
        neg_train_scores,
        budget: LearnedBudget,
        k_min: int = 8,
        k_max: int = 11,
        c_min: float = 2.1,
        c_max: float = 2.6,
        seed: int = 0,
        clock=None,
    ) -> "AdaBF":
        budget.require_backup()
        t0 = time.perf_counter_ns()
        m = budget.backup_bits - BLOOM_HEADER_BITS
        if m < 1:
            raise ValueError("backup budget too small for the shared array")
        neg = np.sort(np.asarray(neg_train_scores, dtype=np.float64))
        if neg.size == 0:
            raise ValueError("need non-empty negative training scores")
        pos_scores = np.asarray([scorer.score(x) for x in positives])

        k_count = k_max - k_min + 1
        if np.all(neg == neg[0]):
            # degenerate scorer: single group, max probes
            flt = cls(scorer, [], [k_max], m, seed, c=None)
            t1 = time.perf_counter_ns()
            flt._insert_all(positives, pos_scores)
            if clock is not None:
                clock.add("threshold_finding", t1 - t0)
                clock.add("filter_inserts", time.perf_counter_ns() - t1)
            return flt

        best = None
        for c in np.arange(c_min, c_max + 1e-9, 0.1):
            c = round(float(c), 10)
            # group g holds c^(K-1-g) units of negative mass (ascending score)
            units = np.array([c ** (k_count - 1 - g) for g in range(k_count)])
            cum = np.cumsum(units / units.sum())[:-1]
            thresholds = [float(np.quantile(neg, q)) for q in cum]
            est = cls._estimate_fpr(
                thresholds, k_min, k_max, m, neg, pos_scores
            )
            if best is None or est < best[0]:
                best = (est, c, thresholds)
        _, c, thresholds = best
        group_hashes = [k_max - g for g in range(k_count)]
        flt = cls(scorer, thresholds, group_hashes, m, seed, c)
        t1 = time.perf_counter_ns()
        flt._insert_all(positives, pos_scores)
        if clock is not None:
            clock.add("threshold_finding", t1 - t0)
            clock.add("filter_inserts", time.perf_counter_ns() - t1)
        return flt

    @staticmethod
    def _estimate_fpr(thresholds, k_min, k_max, m, neg_scores, pos_scores):
        """Analytic FPR on the training negatives for candidate thresholds."""
        groups_pos = np.searchsorted(thresholds, pos_scores, side="right")
        total_probes = int(np.sum(k_max - groups_pos))
        fill = 1.0 - math.exp(-total_probes / m)
        groups_neg = np.searchsorted(thresholds, neg_scores, side="right")
        est = 0.0
        for g in range(k_max - k_min + 1):
            mass = float(np.mean(groups_neg == g))
            est += mass * fill ** (k_max - g)
        return est

    def _group(self, s: float) -> int:
        # a score equal to a cutpoint belongs to the higher-score group
        return bisect_right(self.thresholds, s)

    def _insert_all(self, positives, pos_scores) -> None:
        for key, s in zip(positives, pos_scores):
            self._set_bits(key, self.group_hashes[self._group(float(s))])
        self.n_inserted = len(positives)

    def _set_bits(self, key: bytes, k: int) -> None:
        bits = self._bits
        for pos in probe_positions(hash_key(key, self.seed), self.m, k):
            bits[pos >> 3] |= 1 << (pos & 7)

    def score_stage(self, key: bytes) -> float:
        return self.scorer.score(key)

    def probe_stage(self, key: bytes, s: float) -> bool:
        k = self.group_hashes[self._group(s)]
        h = hash_key(key, self.seed)
        h1 = h & 0xFFFFFFFF
        h2 = (h >> 32) | 1
        bits = self._bits
        m = self.m
        for i in range(k):
            pos = h1 % m
            if not bits[pos >> 3] & (1 << (pos & 7)):
                return False
            h1 += h2
            h2 += i + 1
        return True

    def query(self, key: bytes) -> bool:
        return self.probe_stage(key, self.scorer.score(key))

    def size_bits(self) -> int:
        return self.scorer.size_bytes * 8 + self.m + BLOOM_HEADER_BITS


# -- PLBF ---------------------------------------------------------------------


def plbf_partition(g_mass, h_mass, k: int, h_floor: float):
    """Exact O(N^2 k) DP over contiguous segment regions.

    Maximizes sum_j G_j * log2(G_j / H_j), the partition objective whose
    optimum minimizes the analytic overall FPR at a fixed bit budget.
    Returns (boundaries, objective); boundaries are the k-1 region start
    segments (exclusive of 0).
    """
    n = len(g_mass)
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= N")
    preg = np.concatenate([[0.0], np.cumsum(g_mass)])
    preh = np.concatenate([[0.0], np.cumsum(h_mass)])

    def seg_score(a, i):
        """Vector of scores for regions [a_0..i), ..., given array a."""
        G = preg[i] - preg[a]
        H = np.maximum(preh[i] - preh[a], h_floor)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(G > 0, G * np.log2(np.maximum(G, 1e-300) / H), 0.0)
        return out

    NEG = -np.inf
    dp = np.full((k + 1, n + 1), NEG)
    choice = np.zeros((k + 1, n + 1), dtype=np.int64)
    starts = np.arange(n + 1)
    dp[0][0] = 0.0
    for t in range(1, k + 1):
        for i in range(t, n - (k - t) + 1):
            s = starts[t - 1 : i]
            cand = dp[t - 1][t - 1 : i] + seg_score(s, i)
            j = int(np.argmax(cand))
            dp[t][i] = cand[j]
            choice[t][i] = s[j]
    boundaries = []
    i = n
    for t in range(k, 1, -1):
        i = int(choice[t][i])
        boundaries.append(i)
    boundaries.reverse()
    return boundaries, float(dp[k][n])


def waterfill_region_fprs(g_mass, h_mass, n_pos, budget_bits, h_floor):
    """Per-region FPR targets minimizing sum_j H_j*f_j within the budget.

    Lagrangian form f_j = min(1, lam * G_j/H_j); lam found by bisection so
    the 1.44 * n_j * log2(1/f_j) bit total meets the budget.  Regions with
    no negative mass get f_j = 1 (no filter); empty positive regions cost
    nothing.
    """
    G = np.asarray(g_mass, dtype=np.float64)
    H = np.maximum(np.asarray(h_mass, dtype=np.float64), h_floor)
    # a region with no positives stores nothing and can reject for free
    ratio = np.where(G > 0, G / H, 0.0)

    def bits_needed(lam):
        f = np.where(G > 0, np.minimum(1.0, lam * ratio), 0.0)
        with np.errstate(divide="ignore"):
            per = np.where(
                (G > 0) & (f < 1.0), 1.44 * n_pos * G * np.log2(1.0 / np.maximum(f, 1e-300)), 0.0
            )
        return per.sum(), f

    if budget_bits <= 0:
        return np.where(G > 0, 1.0, 0.0)
    lo, hi = 1e-18, 1e18
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        used, _ = bits_needed(mid)
        if used > budget_bits:
            lo = mid
        else:
            hi = mid
    _, f = bits_needed(hi)
    return f


class PLBF:
    """Partitioned learned Bloom filter.

    The score space is cut into N equal segments; an exact DP groups the
    segments into k contiguous regions, and each region gets its own backup
    Bloom filter sized by water-filling (regions dominated by positives may
    get f_j = 1 and store nothing).
    """

    def __init__(self, scorer, n_segments, boundaries, region_filters, region_fprs, seed):
        self.scorer = scorer
        self.n_segments = n_segments
        self.boundaries = boundaries  # region start segments, ascending
        self.region_filters = region_filters  # BloomFilter | "accept" | None
        self.region_fprs = region_fprs
        self.seed = seed

    @classmethod
    def build(
        cls,
        positives,
        scorer,
        neg_train_scores,
        budget: LearnedBudget,
        n_segments: int = 1000,
        k: int = 5,
        seed: int = 0,
        clock=None,
    ) -> "PLBF":
        budget.require_backup()
        t0 = time.perf_counter_ns()
        if not positives:
            raise ValueError("need at least one positive key")
        if not 1 <= k <= n_segments:
            raise ValueError("need 1 <= k <= N")
        pos_scores = np.asarray([scorer.score(x) for x in positives])
        neg_scores = np.asarray(neg_train_scores, dtype=np.float64)
        N = n_segments

        def mass(scores):
            seg = np.minimum((scores * N).astype(np.int64), N - 1)
            cnt = np.bincount(seg, minlength=N).astype(np.float64)
            return cnt / max(1, len(scores))

        g_mass = mass(pos_scores)
        h_mass = mass(neg_scores) if neg_scores.size else np.zeros(N)
        h_floor = 0.5 / max(1, neg_scores.size)
        boundaries, _ = plbf_partition(g_mass, h_mass, k, h_floor)

        cuts = [0] + boundaries + [N]
        G = np.array([g_mass[a:b].sum() for a, b in zip(cuts, cuts[1:])])
        H = np.array([h_mass[a:b].sum() for a, b in zip(cuts, cuts[1:])])
        net = max(0, budget.backup_bits - k * BLOOM_HEADER_BITS)
        f = waterfill_region_fprs(G, H, len(positives), net, h_floor)

        t1 = time.perf_counter_ns()
        # build per-region filters and spill the positives into them
        region_of = np.searchsorted(boundaries, np.minimum(
            (pos_scores * N).astype(np.int64), N - 1
        ), side="right")
        counts = np.bincount(region_of, minlength=k)
        filters: list = []
        fprs: list[float] = []
        for j in range(k):
            n_j = int(counts[j])
            if f[j] >= 1.0:
                filters.append("accept")
                fprs.append(1.0)
                continue
            if n_j == 0:
                # nothing stored: a constant reject is identical to an
                # empty filter and costs no bits
                filters.append("reject")
                fprs.append(0.0)
                continue
            m_j = max(1, int(1.44 * n_j * math.log2(1.0 / max(f[j], 1e-300))))
            flt = BloomFilter(m_j, optimal_k(m_j, n_j), seed + j)
            filters.append(flt)
            fprs.append(analytic_fpr(m_j, flt.k, n_j))
        for key, rj in zip(positives, region_of):
            flt = filters[rj]
            if flt not in ("accept", "reject"):
                flt.insert(key)
        if clock is not None:
            clock.add("threshold_finding", t1 - t0)
            clock.add("filter_inserts", time.perf_counter_ns() - t1)
        return cls(scorer, N, boundaries, filters, fprs, seed)

    def _region(self, s: float) -> int:
        seg = min(int(s * self.n_segments), self.n_segments - 1)
        return int(np.searchsorted(self.boundaries, seg, side="right"))

    def score_stage(self, key: bytes) -> float:
        return self.scorer.score(key)

    def probe_stage(self, key: bytes, s: float) -> bool:
        flt = self.region_filters[self._region(s)]
        if flt == "accept":
            return True
        if flt == "reject":
            return False
        return flt.query(key)

    def query(self, key: bytes) -> bool:
        return self.probe_stage(key, self.scorer.score(key))

    def size_bits(self) -> int:
        backup = sum(
            flt.size_bits()
            for flt in self.region_filters
            if flt not in ("accept", "reject")
        )
        return self.scorer.size_bytes * 8 + backup

    def summary(self) -> dict:
        return {
            "n_segments": self.n_segments,
            "boundaries": list(map(int, self.boundaries)),
            "region_fprs": [float(x) for x in self.region_fprs],
            "regions_accepting": sum(
                1 for f in self.region_filters if f == "accept"
            ),
        }
