"""Size-matched construction planning.

Every filter in a comparison cell is sized to the in-memory footprint of an
adaptive quotient filter with q = ceil(log2 n) slots at the given r: the
stacked filter gets that budget outright, learned filters get it minus their
trained model's bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..quotient import QF_HEADER_BITS

MIN_BACKUP_BITS = 64  # a learned row with less backup room is infeasible


@dataclass(frozen=True)
class PlanRow:
    r: int
    q: int
    aqf_bits: int
    model_bits: int
    learned_feasible: bool

    @property
    def learned_total_bits(self) -> int:
        return self.aqf_bits

    @property
    def stacked_budget_bits(self) -> int:
        return self.aqf_bits


@dataclass(frozen=True)
class SizeMatchPlan:
    n: int
    q: int
    rows: tuple[PlanRow, ...]

    def row(self, r: int) -> PlanRow:
        for row in self.rows:
            if row.r == r:
                return row
        raise KeyError(f"no plan row for r={r}")


def aqf_empty_size_bits(q: int, r: int) -> int:
    return (1 << q) * (r + 3) + QF_HEADER_BITS


def size_match_plan(n: int, r_values, model_bytes: int) -> SizeMatchPlan:
    if n < 1:
        raise ValueError("need at least one positive key")
    q = max(1, math.ceil(math.log2(n)))
    model_bits = model_bytes * 8
    rows = []
    for r in r_values:
        aqf_bits = aqf_empty_size_bits(q, r)
        feasible = model_bits + MIN_BACKUP_BITS < aqf_bits
        rows.append(PlanRow(r, q, aqf_bits, model_bits, feasible))
    return SizeMatchPlan(n, q, tuple(rows))
