"""Benchmark harness: size-matched construction, experiment runners, and
report emission."""
