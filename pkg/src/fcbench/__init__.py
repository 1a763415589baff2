"""fcbench: approximate-membership filters and a size-matched benchmark.

Four filter paradigms under one roof - traditional (Bloom, quotient),
adaptive (quotient filter with fingerprint extension on false-positive
feedback), learned (threshold, Ada-BF, PLBF over a decision-tree scorer),
and stacked (alternating positive/negative Bloom cascades) - plus seeded
workload generators and a benchmark harness that builds every filter to
the same space budget and accounts FPR and per-operation timing.
"""

__version__ = "0.1.0"
