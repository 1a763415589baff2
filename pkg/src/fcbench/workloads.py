"""Datasets and seeded workload generators.

Every generator is a pure function of (inputs, seed) so benchmark cells are
replayable.  Zipfian rank assignment hashes dataset indices first; without
that, label-sorted datasets would put all the query mass on one class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hashing import hash_key


@dataclass
class Record:
    key: bytes
    label: int  # 1 positive, 0 negative
    features: np.ndarray | None = None


@dataclass
class Dataset:
    records: list[Record]
    name: str = "dataset"

    def __post_init__(self):
        keys = [r.key for r in self.records]
        if len(set(keys)) != len(keys):
            raise ValueError("dataset keys must be distinct")
        self.n_pos = sum(r.label == 1 for r in self.records)
        self.n_neg = len(self.records) - self.n_pos

    @property
    def keys(self) -> list[bytes]:
        return [r.key for r in self.records]

    def positives(self) -> list[bytes]:
        return [r.key for r in self.records if r.label == 1]

    def negatives(self) -> list[bytes]:
        return [r.key for r in self.records if r.label == 0]

    def feature_map(self) -> dict[bytes, np.ndarray]:
        return {r.key: r.features for r in self.records if r.features is not None}


@dataclass
class WorkloadSpec:
    kind: str  # one_pass | uniform | zipfian | adversarial | dynamic
    count: int = 1_000_000
    z: float = 1.5
    d: float = 0.02
    seed: int = 0

    def __post_init__(self):
        kinds = {"one_pass", "uniform", "zipfian", "adversarial", "dynamic"}
        if self.kind not in kinds:
            raise ValueError(f"kind must be one of {sorted(kinds)}")
        if self.kind == "zipfian" and self.z <= 0:
            raise ValueError("zipfian exponent z must be > 0")
        if self.kind == "adversarial" and not 0 < self.d < 1:
            raise ValueError("adversarial proportion d must be in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "count": self.count,
            "z": self.z,
            "d": self.d,
            "seed": self.seed,
        }


def gen_synthetic_dataset(
    n_pos: int,
    n_neg: int,
    feature_dim: int = 8,
    separability: float = 0.9,
    seed: int = 0,
    name: str = "synthetic",
) -> Dataset:
    """Random byte-string keys with two-Gaussian features.

    Class mean separation scales with ``separability``; 0 means the feature
    distributions are identical (nothing learnable), 1 gives a 3-sigma shift
    on every axis.
    """
    if n_pos < 1 or n_neg < 1 or feature_dim < 1:
        raise ValueError("counts and feature_dim must be >= 1")
    rng = np.random.default_rng(seed)
    n = n_pos + n_neg
    # 12 random bytes plus a 4-byte counter keeps keys distinct
    blob = rng.bytes(12 * n)
    keys = [
        blob[12 * i : 12 * (i + 1)] + i.to_bytes(4, "little") for i in range(n)
    ]
    shift = 3.0 * separability
    pos_f = rng.normal(shift, 1.0, size=(n_pos, feature_dim))
    neg_f = rng.normal(0.0, 1.0, size=(n_neg, feature_dim))
    records = [Record(keys[i], 1, pos_f[i]) for i in range(n_pos)]
    records.extend(Record(keys[n_pos + i], 0, neg_f[i]) for i in range(n_neg))
    return Dataset(records, name=name)


# -- query sequence generators -------------------------------------------------


def gen_one_pass(dataset: Dataset, seed: int) -> list[bytes]:
    """A seeded permutation of all keys, each queried exactly once."""
    keys = dataset.keys
    order = np.random.default_rng(seed).permutation(len(keys))
    return [keys[i] for i in order]


def gen_uniform(dataset: Dataset, count: int, seed: int) -> list[bytes]:
    if count < 1:
        raise ValueError("count must be >= 1")
    keys = dataset.keys
    idx = np.random.default_rng(seed).integers(0, len(keys), size=count)
    return [keys[i] for i in idx]


def zipf_rank_order(n: int, seed: int) -> np.ndarray:
    """Dataset indices sorted by hashed index: position k holds the index
    with rank k+1.  Hashing decorrelates rank from dataset order."""
    hashes = np.fromiter(
        (hash_key(i.to_bytes(8, "little"), seed) for i in range(n)),
        dtype=np.uint64,
        count=n,
    )
    return np.argsort(hashes, kind="stable")


def gen_zipfian(dataset: Dataset, count: int, z: float, seed: int) -> list[bytes]:
    """Draws with P(rank i) proportional to 1/i^z over hash-permuted ranks."""
    if z <= 0:
        raise ValueError("z must be > 0")
    keys = dataset.keys
    n = len(keys)
    order = zipf_rank_order(n, seed)
    weights = 1.0 / np.power(np.arange(1, n + 1, dtype=np.float64), z)
    cum = np.cumsum(weights)
    rng = np.random.default_rng(seed)
    draws = rng.random(count) * cum[-1]
    ranks = np.searchsorted(cum, draws, side="right")
    return [keys[order[r]] for r in ranks]


# -- adversarial driver ---------------------------------------------------------


@dataclass
class AdversarialOutcome:
    n_queries: int
    n_false_positives: int
    n_true_negatives: int
    n_injected: int
    fp_pool_size: int
    flags: list[str] = field(default_factory=list)

    @property
    def fpr(self) -> float | None:
        denom = self.n_false_positives + self.n_true_negatives
        return self.n_false_positives / denom if denom else None


def adversarial_driver(
    dataset: Dataset,
    flt,
    count: int,
    d: float,
    seed: int,
    live_positives: set[bytes] | None = None,
) -> AdversarialOutcome:
    """Two-phase adversarial replay.

    Phase 1 issues count/2 uniform queries, recording oracle-confirmed false
    positives.  Phase 2 issues uniform queries but replaces every
    (count/2)/(d*count)-th one with the next recorded false positive, rotating
    through the pool.  Adaptive filters get feedback on every confirmed false
    positive in both phases.
    """
    if not 0 < d < 1:
        raise ValueError("d must be in (0, 1)")
    if count % 2:
        raise ValueError("count must be even")
    truth = live_positives if live_positives is not None else set(dataset.positives())
    report = getattr(flt, "report_false_positive", None)
    stream = gen_uniform(dataset, count, seed)
    half = count // 2

    pool: list[bytes] = []
    seen_fp: set[bytes] = set()
    q_fp = 0
    q_tn = 0

    for key in stream[:half]:
        present = flt.query(key)
        if key in truth:
            continue
        if present:
            q_fp += 1
            if key not in seen_fp:
                seen_fp.add(key)
                pool.append(key)
            if report is not None:
                report(key)
        else:
            q_tn += 1

    interval = int(half / (d * count))  # == floor(1/(2d))
    injected = 0
    flags = []
    rotor = 0
    for i, key in enumerate(stream[half:]):
        if pool and (i + 1) % interval == 0:
            key = pool[rotor % len(pool)]
            rotor += 1
            injected += 1
        present = flt.query(key)
        if key in truth:
            continue
        if present:
            q_fp += 1
            if report is not None:
                report(key)
        else:
            q_tn += 1
    if not pool:
        flags.append("no_phase1_false_positives")
    return AdversarialOutcome(count, q_fp, q_tn, injected, len(pool), flags)


# -- dynamic churn ----------------------------------------------------------------


@dataclass
class ChurnSchedule:
    """Window swaps between the inserted set and a negative replacement set.

    Churn j swaps positions [n/5*(j%5), +n/5); after churns 0-4 the live set
    is entirely replacement keys, after 5-9 it is the original positives
    again.
    """

    original: list[bytes]
    replacement: list[bytes]
    live: list[bytes]
    n_churns: int = 10

    def window(self, j: int) -> tuple[int, int]:
        n = len(self.original)
        w = n // 5
        k = j % 5
        start = w * k
        end = start + w if k < 4 else n  # last window absorbs the remainder
        return start, end


def churn_schedule(dataset: Dataset, seed: int) -> ChurnSchedule:
    positives = dataset.positives()
    negatives = dataset.negatives()
    if len(negatives) < len(positives):
        raise ValueError(
            "dynamic workloads need at least as many negatives as positives"
        )
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(negatives), size=len(positives), replace=False)
    replacement = [negatives[i] for i in chosen]
    return ChurnSchedule(list(positives), replacement, list(positives))


def churn_apply(schedule: ChurnSchedule, j: int) -> tuple[list[bytes], list[bytes]]:
    """Apply churn j in place; returns (removed_keys, added_keys)."""
    if not 0 <= j < schedule.n_churns:
        raise ValueError(f"churn index must be in [0, {schedule.n_churns})")
    start, end = schedule.window(j)
    removed = schedule.live[start:end]
    added = schedule.replacement[start:end]
    schedule.live[start:end] = added
    schedule.replacement[start:end] = removed
    return removed, added
