import collections
import math

import numpy as np
import pytest

from fcbench.bloom import BloomFilter
from fcbench.workloads import (
    Dataset,
    Record,
    WorkloadSpec,
    adversarial_driver,
    churn_apply,
    churn_schedule,
    gen_one_pass,
    gen_synthetic_dataset,
    gen_uniform,
    gen_zipfian,
    zipf_rank_order,
)


def tiny_dataset(n_pos, n_neg):
    recs = [Record(f"p{i}".encode(), 1) for i in range(n_pos)]
    recs += [Record(f"n{i}".encode(), 0) for i in range(n_neg)]
    return Dataset(recs)


class TestWorkloadSpec:
    def test_roundtrip_dict(self):
        spec = WorkloadSpec("zipfian", count=100, z=1.5, seed=4)
        assert spec.to_dict()["kind"] == "zipfian"

    def test_validation(self):
        with pytest.raises(ValueError):
            WorkloadSpec("nope")
        with pytest.raises(ValueError):
            WorkloadSpec("zipfian", z=0)
        with pytest.raises(ValueError):
            WorkloadSpec("adversarial", d=0)


class TestOnePass:
    def test_each_key_exactly_once(self):
        ds = tiny_dataset(2, 1)
        seq = gen_one_pass(ds, seed=0)
        assert len(seq) == 3
        assert collections.Counter(seq) == collections.Counter(ds.keys)

    def test_seed_determinism(self):
        ds = tiny_dataset(10, 10)
        assert gen_one_pass(ds, 5) == gen_one_pass(ds, 5)
        assert gen_one_pass(ds, 5) != gen_one_pass(ds, 6)


class TestUniform:
    def test_single_key_dataset(self):
        ds = tiny_dataset(1, 0)
        assert set(gen_uniform(ds, 100, seed=1)) == {b"p0"}

    def test_chi_square_balance(self):
        """Each of 10 keys drawn 10^6 times lands within 5 sigma of 10^5."""
        ds = tiny_dataset(5, 5)
        counts = collections.Counter(gen_uniform(ds, 1_000_000, seed=2))
        sigma = math.sqrt(1_000_000 * 0.1 * 0.9)
        for k in ds.keys:
            assert abs(counts[k] - 100_000) <= 5 * sigma

    def test_seed_determinism(self):
        ds = tiny_dataset(4, 4)
        assert gen_uniform(ds, 50, 9) == gen_uniform(ds, 50, 9)


class TestZipfian:
    def test_two_element_probabilities(self):
        # normalize(1, 2^-1.5) = (0.7388, 0.2612)
        ds = tiny_dataset(1, 1)
        counts = collections.Counter(gen_zipfian(ds, 200_000, z=1.5, seed=3))
        top = counts.most_common(1)[0][1] / 200_000
        assert top == pytest.approx(0.7388, abs=0.005)

    def test_rank_ratio(self):
        """freq(rank1)/freq(rank2) within 5 sigma of 2^1.5 over 10^6 draws."""
        ds = tiny_dataset(10, 10)
        n = 1_000_000
        seq = gen_zipfian(ds, n, z=1.5, seed=7)
        counts = collections.Counter(seq)
        order = zipf_rank_order(20, seed=7)
        keys = ds.keys
        n1 = counts[keys[order[0]]]
        n2 = counts[keys[order[1]]]
        ratio = n1 / n2
        target = 2**1.5
        sigma = ratio * math.sqrt(1 / n1 + 1 / n2)
        assert abs(ratio - target) <= 5 * sigma

    def test_log_log_slope(self):
        """Top-100 empirical log-frequency vs log-rank slope within z +- 0.1."""
        ds = tiny_dataset(500, 500)
        n = 1_000_000
        z = 1.5
        counts = collections.Counter(gen_zipfian(ds, n, z=z, seed=11))
        order = zipf_rank_order(1000, seed=11)
        keys = ds.keys
        freqs = np.array([counts[keys[order[i]]] for i in range(100)], dtype=float)
        ranks = np.arange(1, 101, dtype=float)
        slope = np.polyfit(np.log(ranks), np.log(freqs), 1)[0]
        assert -z - 0.1 <= slope <= -z + 0.1

    def test_hashed_ranks_decorrelate_labels(self):
        """On a label-sorted dataset the positive query mass stays interior;
        the unhashed control would concentrate it on one class."""
        ds = tiny_dataset(500, 500)  # positives occupy the first 500 indices
        pos = set(ds.positives())
        for seed in (1, 2, 3):
            seq = gen_zipfian(ds, 100_000, z=1.5, seed=seed)
            mass = sum(k in pos for k in seq) / len(seq)
            assert 0.08 < mass < 0.92
        # unhashed control: rank = dataset index puts all mass on positives
        weights = 1.0 / np.arange(1, 1001) ** 1.5
        control_mass = weights[:500].sum() / weights.sum()
        assert control_mass > 0.9


class ExactFilter:
    """Oracle filter with zero false positives."""

    def __init__(self, members):
        self._members = set(members)

    def query(self, key):
        return key in self._members


class TestAdversarialDriver:
    def test_interval_arithmetic(self):
        # (|Q|/2) / (d*|Q|) = 25 for d=0.02 regardless of |Q|
        assert int((10**7 / 2) / (0.02 * 10**7)) == 25

    def test_injected_count_tracks_d(self):
        ds = tiny_dataset(200, 800)
        flt = BloomFilter(1200, 4, seed=5)  # lossy enough to produce FPs
        flt.insert_many(ds.positives())
        out = adversarial_driver(ds, flt, count=20_000, d=0.05, seed=1)
        assert out.fp_pool_size >= 1
        assert abs(out.n_injected - 0.05 * 20_000) <= 1

    def test_bloom_fpr_floor_at_d(self):
        """Injected queries repeat known false positives, so a non-adaptive
        filter's final FPR is at least d."""
        ds = tiny_dataset(200, 800)
        flt = BloomFilter(1200, 4, seed=5)
        flt.insert_many(ds.positives())
        out = adversarial_driver(ds, flt, count=20_000, d=0.05, seed=1)
        assert out.fpr is not None and out.fpr >= 0.05

    def test_exact_filter_no_injections_flagged(self):
        ds = tiny_dataset(50, 450)
        out = adversarial_driver(ds, ExactFilter(ds.positives()), 2_000, 0.05, 3)
        assert out.n_injected == 0
        assert "no_phase1_false_positives" in out.flags
        assert out.n_false_positives == 0

    def test_validation(self):
        ds = tiny_dataset(5, 5)
        with pytest.raises(ValueError):
            adversarial_driver(ds, ExactFilter([]), 101, 0.05, 0)  # odd count


class TestChurn:
    def test_window_positions(self):
        ds = tiny_dataset(10, 20)
        sched = churn_schedule(ds, seed=0)
        assert sched.window(1) == (2, 4)
        assert sched.window(6) == (2, 4)
        assert sched.window(4) == (8, 10)

    def test_each_churn_swaps_twenty_percent(self):
        ds = tiny_dataset(10, 20)
        sched = churn_schedule(ds, seed=0)
        for j in range(10):
            before = list(sched.live)
            removed, added = churn_apply(sched, j)
            assert len(removed) == len(added) == 2
            assert sum(a != b for a, b in zip(before, sched.live)) == 2

    def test_round_trip_restores_original(self):
        ds = tiny_dataset(25, 30)
        sched = churn_schedule(ds, seed=4)
        original = list(sched.original)
        replacement_keys = set(sched.replacement)
        for j in range(5):
            churn_apply(sched, j)
        assert set(sched.live) == replacement_keys  # fully swapped out
        for j in range(5, 10):
            churn_apply(sched, j)
        assert sched.live == original

    def test_replacement_disjoint_from_positives(self):
        ds = tiny_dataset(10, 40)
        sched = churn_schedule(ds, seed=2)
        assert not set(sched.replacement) & set(sched.original)

    def test_needs_enough_negatives(self):
        with pytest.raises(ValueError):
            churn_schedule(tiny_dataset(10, 5), seed=0)


class TestSyntheticDataset:
    def test_counts_and_distinct_keys(self):
        ds = gen_synthetic_dataset(30, 70, feature_dim=2, seed=0)
        assert ds.n_pos == 30 and ds.n_neg == 70
        assert len(set(ds.keys)) == 100

    def test_duplicate_keys_rejected(self):
        with pytest.raises(ValueError):
            Dataset([Record(b"a", 1), Record(b"a", 0)])
