"""Per-category monotonic-clock accumulators for the timing experiment.

Construction categories: filter_inserts, model_training, threshold_finding,
reverse_map_updates.  Query categories: filter_query, score_inference,
reverse_map_updates.  Key vectorization is measured separately and belongs
to neither breakdown.

The runners bracket work in batches so the clock calls themselves stay out
of the categories; the report invariant is that categories sum to at least
95% of the measured phase wall time.
"""

from __future__ import annotations

import time
from collections import defaultdict
from contextlib import contextmanager

CONSTRUCTION_CATEGORIES = (
    "filter_inserts",
    "model_training",
    "threshold_finding",
    "reverse_map_updates",
)
QUERY_CATEGORIES = ("filter_query", "score_inference", "reverse_map_updates")


class CategoryTimer:
    def __init__(self):
        self.ns = defaultdict(int)

    def add(self, category: str, ns: int) -> None:
        self.ns[category] += ns

    @contextmanager
    def measure(self, category: str):
        t0 = time.perf_counter_ns()
        try:
            yield
        finally:
            self.ns[category] += time.perf_counter_ns() - t0

    def get(self, category: str) -> int:
        return self.ns.get(category, 0)

    def snapshot(self) -> dict[str, int]:
        return dict(self.ns)
