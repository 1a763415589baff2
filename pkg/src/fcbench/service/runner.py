"""Shared experiment entrypoint: the API route and the CLI's local mode both
dispatch typed requests through run_experiment_request."""

from __future__ import annotations

from ..bench.datasets import load_dataset
from ..bench.report import document
from ..bench.runners import (
    BenchConfig,
    run_dynamic_experiment,
    run_fpr_experiment,
    run_modelprop_experiment,
    run_timing_experiment,
    run_trainprop_experiment,
)
from ..workloads import WorkloadSpec
from .models import ExperimentRequest


def config_from_request(req: ExperimentRequest) -> BenchConfig:
    return BenchConfig(
        filters=tuple(req.filters),
        r_values=tuple(req.r_values),
        queries=req.queries,
        trials=req.trials,
        seed=req.seed,
        neg_fraction=req.neg_fraction,
        max_leaf_nodes=req.max_leaf_nodes,
        lbf_threshold=req.lbf_threshold,
        probe_size=req.probe_size,
        z=req.z,
        d_values=tuple(req.d_values),
        retrain=req.retrain,
        model_shares=tuple(req.model_shares),
        neg_fractions=tuple(req.neg_fractions),
    )


def run_experiment_request(req: ExperimentRequest) -> dict:
    dataset = load_dataset(req.dataset, featurize=req.featurize)
    config = config_from_request(req)
    r = config.r_values[0]
    if req.kind == "fpr":
        reports = []
        if req.workload == "adversarial":
            for d in config.d_values:
                spec = WorkloadSpec(
                    "adversarial", count=req.queries, d=d, seed=req.seed
                )
                reports.extend(run_fpr_experiment(dataset, spec, config))
        else:
            spec = WorkloadSpec(
                req.workload, count=req.queries, z=req.z, seed=req.seed
            )
            reports = run_fpr_experiment(dataset, spec, config)
    elif req.kind == "dynamic":
        reports = run_dynamic_experiment(dataset, config, r=r)
    elif req.kind == "timing":
        reports = run_timing_experiment(dataset, config, r=r)
    elif req.kind == "modelprop":
        reports = run_modelprop_experiment(dataset, config, r=r)
    elif req.kind == "trainprop":
        reports = run_trainprop_experiment(dataset, config, r=r)
    else:  # pragma: no cover - pydantic restricts the literal
        raise ValueError(f"unknown experiment kind {req.kind!r}")
    return document(reports)
