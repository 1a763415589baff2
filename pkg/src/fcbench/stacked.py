"""Stacked filter: alternating positive/negative Bloom layers.

Layer 1 stores all positives; layer 2 stores the sampled frequent negatives
that pass layer 1; layer 3 stores the positives that collide with layer 2,
and so on.  Queries walk the layers: an absent at a positive layer means
definitely-not-stored, an absent at a negative layer means stored (the key
escaped the trap layers).  Frequent negatives are thereby answered exactly,
and infrequent ones must clear several independent filters to err.

The planner is a bounded grid search over (layer count, per-parity FPR)
driven by the closed-form expected-FPR and expected-size expressions, so
plan dominance over the grid is a checkable property.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .bloom import BloomFilter, optimal_k, bits_for_fpr

PLAN_LAYER_CHOICES = (1, 3, 5)
PLAN_FPR_GRID = tuple(2.0**-e for e in range(1, 17))
TRUNCATION_HALVINGS = 8


@dataclass
class NegativeSample:
    """Frequent negatives N_F (most frequent first) with the probability
    psi that a negative query falls inside them."""

    frequent_negatives: list[bytes]
    psi: float
    counts: list[int] = field(default_factory=list)
    total_negative_queries: int = 0

    def __post_init__(self):
        if not 0.0 <= self.psi <= 1.0:
            raise ValueError("psi must be in [0, 1]")

    @classmethod
    def from_queries(cls, queries, positive_set) -> "NegativeSample":
        """Estimate from a query prefix with ground truth."""
        freq = Counter(q for q in queries if q not in positive_set)
        total = sum(freq.values())
        ordered = freq.most_common()
        keys = [k for k, _ in ordered]
        counts = [c for _, c in ordered]
        psi = 1.0 if total else 0.0
        return cls(keys, psi, counts, total)

    def truncated(self, cap: int) -> "NegativeSample":
        if not self.counts or cap >= len(self.frequent_negatives):
            return self
        kept = sum(self.counts[:cap])
        psi = kept / self.total_negative_queries if self.total_negative_queries else 0.0
        return NegativeSample(
            self.frequent_negatives[:cap],
            psi,
            self.counts[:cap],
            self.total_negative_queries,
        )


@dataclass(frozen=True)
class LayerPlan:
    """Odd number of layers with per-layer FPR targets a_1..a_l."""

    fprs: tuple[float, ...]

    def __post_init__(self):
        l = len(self.fprs)
        if l < 1 or l % 2 == 0:
            raise ValueError("layer count must be odd and >= 1")
        if not all(0 < a <= 1 for a in self.fprs):
            raise ValueError("layer FPRs must be in (0, 1]")

    @property
    def l(self) -> int:
        return len(self.fprs)


def sf_expected_fpr(plan: LayerPlan, psi: float) -> float:
    """Two-term closed form: frequent negatives must fool every positive
    layer; infrequent ones either clear all layers or die in a trap layer."""
    a = (None, *plan.fprs)  # 1-based
    l = plan.l
    odd_prod = math.prod(a[2 * i + 1] for i in range((l - 1) // 2 + 1))
    all_prod = math.prod(a[1 : l + 1])
    escape = sum(
        math.prod(a[1 : 2 * i]) * (1 - a[2 * i]) for i in range(1, (l - 1) // 2 + 1)
    )
    return psi * odd_prod + (1 - psi) * (all_prod + escape)


def layer_bits_per_element(eps: float) -> float:
    return 1.44 * math.log2(1.0 / eps) if eps < 1.0 else 0.0


def sf_expected_size(plan: LayerPlan, n_pos: int, n_freq_neg: int) -> float:
    """Survival-product size sum: positive layer 2i+1 holds the positives
    that collided with the first i trap layers, trap layer 2i holds the
    frequent negatives that fooled the first i positive layers."""
    a = (None, *plan.fprs)
    l = plan.l
    total = 0.0
    for i in range((l - 1) // 2 + 1):
        survive = math.prod(a[2 * j] for j in range(1, i + 1))
        total += layer_bits_per_element(a[2 * i + 1]) * n_pos * survive
    for i in range(1, (l - 1) // 2 + 1):
        survive = math.prod(a[2 * j - 1] for j in range(1, i + 1))
        total += layer_bits_per_element(a[2 * i]) * n_freq_neg * survive
    return total


@dataclass(frozen=True)
class PlanChoice:
    plan: LayerPlan
    psi: float
    n_freq_neg: int
    expected_fpr: float
    expected_size: float


def iter_grid_plans():
    for l in PLAN_LAYER_CHOICES:
        if l == 1:
            for a in PLAN_FPR_GRID:
                yield LayerPlan((a,))
        else:
            for a_pos in PLAN_FPR_GRID:
                for a_neg in PLAN_FPR_GRID:
                    fprs = tuple(
                        a_pos if i % 2 == 0 else a_neg for i in range(l)
                    )
                    yield LayerPlan(fprs)


def _refine_first_layer(
    plan: LayerPlan, psi: float, n_pos: int, n_f: int, budget: int
) -> LayerPlan:
    """Continuously lower a_1 so the plan's expected size (headers included)
    absorbs the grid-granularity leftover of the budget.

    Lowering a_1 only shrinks later layers (their populations scale with
    survival products), so two fixed-point rounds converge well enough.
    """
    fprs = list(plan.fprs)
    for _ in range(2):
        rest = sf_expected_size(
            LayerPlan(tuple(fprs)), n_pos, n_f
        ) - layer_bits_per_element(fprs[0]) * n_pos
        room = budget - plan.l * 64 - rest
        if room <= 0:
            break
        exponent = room / (1.44 * n_pos)
        a1 = 2.0 ** -max(1.0, exponent)
        if a1 <= fprs[0]:
            fprs[0] = a1
        if plan.l >= 3:
            fprs[2] = fprs[0]
        if plan.l >= 5:
            fprs[4] = fprs[0]
    return LayerPlan(tuple(fprs))


def sf_plan(n_pos: int, sample: NegativeSample, space_budget_bits: int) -> PlanChoice:
    """Grid-search planner; equal FPR within parity class.

    If no multi-layer plan fits at full sample capacity, the frequent set is
    halved (most frequent kept, psi re-estimated) and the search repeated;
    the best feasible plan at that capacity wins.  Ties prefer fewer layers.
    After the grid pick, the positive-layer FPR is refined continuously so
    the plan spends the whole budget.
    """
    caps = [len(sample.frequent_negatives)]
    for _ in range(TRUNCATION_HALVINGS):
        nxt = caps[-1] // 2
        if nxt < 1:
            break
        caps.append(nxt)

    best: tuple | None = None
    for cap in caps:
        sub = sample.truncated(cap)
        n_f = len(sub.frequent_negatives)
        for plan in iter_grid_plans():
            size = sf_expected_size(plan, n_pos, n_f) + plan.l * 64
            if size > space_budget_bits:
                continue
            fpr = sf_expected_fpr(plan, sub.psi)
            key = (fpr, plan.l, plan.fprs)
            if best is None or key < best[0]:
                best = (key, sub, n_f)
        if best is not None and len(best[0][2]) > 1:
            break  # a multi-layer plan fits at this capacity
    if best is None:
        raise ValueError(
            f"budget of {space_budget_bits} bits cannot fit any plan "
            f"for {n_pos} positives"
        )
    _, sub, n_f = best
    plan = LayerPlan(best[0][2])
    plan = _refine_first_layer(plan, sub.psi, n_pos, n_f, space_budget_bits)
    return PlanChoice(
        plan,
        sub.psi,
        n_f,
        sf_expected_fpr(plan, sub.psi),
        sf_expected_size(plan, n_pos, n_f),
    )


class StackedFilter:
    """Alternating cascade of Bloom layers built from a negative sample."""

    def __init__(self, layers: list[BloomFilter], plan: LayerPlan):
        self.layers = layers
        self.plan = plan

    @classmethod
    def build(
        cls,
        positives,
        frequent_negatives,
        plan: LayerPlan,
        seed: int,
        budget_bits: int | None = None,
    ) -> "StackedFilter":
        """Cascade construction; with ``budget_bits`` the layers are capped
        to the remaining budget and the final layer absorbs what is left, so
        the built size matches the budget exactly."""
        from .bloom import BLOOM_HEADER_BITS, bits_for_fpr, optimal_k

        layers: list[BloomFilter] = []
        pos_survivors = list(positives)
        neg_survivors = list(frequent_negatives)
        remaining = budget_bits
        l = plan.l
        for i, a in enumerate(plan.fprs, start=1):
            members = pos_survivors if i % 2 == 1 else neg_survivors
            m = bits_for_fpr(max(1, len(members)), a)
            if remaining is not None:
                # reserve a header plus the 1-bit minimum for every layer
                # still to come, so the final layer can absorb the rest
                reserve = (l - i) * (BLOOM_HEADER_BITS + 1)
                avail = remaining - BLOOM_HEADER_BITS - reserve
                m = max(1, avail) if i == l else max(1, min(m, avail))
                remaining -= m + BLOOM_HEADER_BITS
            layer = BloomFilter(m, optimal_k(m, max(1, len(members))), seed + i)
            layer.insert_many(members)
            layers.append(layer)
            if i % 2 == 1:
                neg_survivors = [y for y in neg_survivors if layer.query(y)]
            else:
                pos_survivors = [x for x in pos_survivors if layer.query(x)]
        return cls(layers, plan)

    def query(self, key: bytes) -> bool:
        for i, layer in enumerate(self.layers, start=1):
            if not layer.query(key):
                # absent at a positive layer: definitely not stored;
                # absent at a trap layer: it escaped, treat as stored
                return i % 2 == 0
        # every layer said present; the last layer is positive (l is odd)
        # and its present verdict decides
        return True

    def size_bits(self) -> int:
        return sum(layer.size_bits() for layer in self.layers)

    def realized_plan(self) -> LayerPlan:
        """Per-layer FPRs of the layers as actually built and filled."""
        return LayerPlan(
            tuple(max(layer.realized_fpr(), 1e-12) for layer in self.layers)
        )

    def summary(self) -> dict:
        return {
            "layers": self.plan.l,
            "target_fprs": list(self.plan.fprs),
            "layer_populations": [l.n_inserted for l in self.layers],
            "layer_bits": [l.size_bits() for l in self.layers],
        }
