"""Experiment runners.

Every runner is deterministic in (dataset, spec, seeds) for all non-timing
fields.  Within one dataset and workload all filters see the same query
sequence; its folded hash is recorded in each report.  Independent
(filter, r, trial) cells can run on a small thread pool capped by the
FCBENCH_THREADS environment variable (default 1).
"""

from __future__ import annotations

import dataclasses
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..hashing import fold_sequence_hash
from ..scorer import TreeScorer, build_training_set, train_decision_tree
from ..stacked import NegativeSample
from ..workloads import (
    Dataset,
    Record,
    WorkloadSpec,
    adversarial_driver,
    churn_apply,
    churn_schedule,
    gen_one_pass,
    gen_uniform,
    gen_zipfian,
)
from .filters import ADAPTIVE_KINDS, LEARNED_KINDS, build_filter
from .plan import SizeMatchPlan, size_match_plan
from .report import Checkpoint, TimingBreakdown, TrialReport
from .timing import CategoryTimer

_BATCH = 256  # staged-timing batch size: keeps clock calls out of categories


@dataclass
class BenchConfig:
    filters: tuple[str, ...] = ("bloom", "aqf", "lbf", "adabf", "plbf", "stacked")
    r_values: tuple[int, ...] = (5, 6, 7, 8, 9, 10, 11)
    queries: int = 1_000_000
    trials: int = 3
    seed: int = 0
    neg_fraction: float = 0.3
    max_leaf_nodes: int = 128
    lbf_threshold: float = 0.5
    adabf_params: tuple = (8, 11, 2.1, 2.6)
    plbf_params: tuple = (1000, 5)
    probe_size: int = 10_000
    z: float = 1.5
    d_values: tuple[float, ...] = (0.02, 0.04, 0.06, 0.08, 0.10)
    retrain: bool = False
    model_shares: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    neg_fractions: tuple[float, ...] = (0.1, 0.3, 0.5, 0.9)

    def trial_seed(self, trial: int) -> int:
        return self.seed * 100_003 + trial


@dataclass
class TrialContext:
    """Per-trial shared state: one retrained model serves every learned
    filter in the trial."""

    scorer: object | None
    neg_train_scores: list[float]
    training_ns: int
    plan: SizeMatchPlan


def _threads() -> int:
    return max(1, int(os.environ.get("FCBENCH_THREADS", "1")))


def make_trial_context(dataset: Dataset, config: BenchConfig, trial: int) -> TrialContext:
    needs_model = any(k in LEARNED_KINDS for k in config.filters)
    scorer = None
    neg_scores: list[float] = []
    training_ns = 0
    if needs_model:
        fmap = dataset.feature_map()
        if len(fmap) != len(dataset.records):
            raise ValueError(
                "learned filters need per-key features; ingest with features "
                "or --featurize url, or use a synthetic dataset"
            )
        t_seed = config.trial_seed(trial)
        t0 = time.perf_counter_ns()
        train = build_training_set(dataset, config.neg_fraction, t_seed)
        tree = train_decision_tree(train, config.max_leaf_nodes, t_seed)
        training_ns = time.perf_counter_ns() - t0
        scorer = TreeScorer(tree, fmap.__getitem__)
        neg_scores = [
            tree.score_vector(ex.features) for ex in train if ex.label == 0
        ]
    model_bytes = scorer.size_bytes if scorer else 0
    plan = size_match_plan(max(1, dataset.n_pos), config.r_values, model_bytes)
    return TrialContext(scorer, neg_scores, training_ns, plan)


def generate_queries(dataset: Dataset, spec: WorkloadSpec) -> list[bytes]:
    if spec.kind == "one_pass":
        return gen_one_pass(dataset, spec.seed)
    if spec.kind in ("uniform", "dynamic"):
        return gen_uniform(dataset, spec.count, spec.seed)
    if spec.kind == "zipfian":
        return gen_zipfian(dataset, spec.count, spec.z, spec.seed)
    if spec.kind == "adversarial":
        # the adversarial driver replays this same base stream per filter
        return gen_uniform(dataset, spec.count, spec.seed)
    raise ValueError(f"no generator for workload {spec.kind!r}")


def run_query_stream(flt, queries, truth, adaptive: bool) -> tuple[int, int]:
    """Count (false positives, true negatives); adaptive filters receive
    feedback on every oracle-confirmed false positive."""
    q_fp = q_tn = 0
    report = flt.report_false_positive if adaptive else None
    query = flt.query
    for key in queries:
        present = query(key)
        if key in truth:
            continue
        if present:
            q_fp += 1
            if report is not None:
                report(key)
        else:
            q_tn += 1
    return q_fp, q_tn


def _build_cell(kind, positives, row, ctx, sample, seed, config, clock=None):
    return build_filter(
        kind,
        positives,
        row,
        seed,
        scorer=ctx.scorer,
        neg_train_scores=ctx.neg_train_scores,
        sample=sample,
        clock=clock,
        lbf_threshold=config.lbf_threshold,
        adabf_params=config.adabf_params,
        plbf_params=config.plbf_params,
    )


def run_fpr_experiment(
    dataset: Dataset, workload: WorkloadSpec, config: BenchConfig
) -> list[TrialReport]:
    """FPR comparison: per (filter, r, trial) build at the size-matched
    budget, insert all positives, replay the shared query set."""
    positives = dataset.positives()
    truth = set(positives)
    queries = generate_queries(dataset, workload)
    qhash = f"{fold_sequence_hash(queries):016x}"
    sample_prefix = queries[: len(queries) // 4]

    cells = []
    contexts = {}
    for trial in range(config.trials):
        ctx = make_trial_context(dataset, config, trial)
        contexts[trial] = ctx
        sample = (
            NegativeSample.from_queries(sample_prefix, truth)
            if "stacked" in config.filters
            else None
        )
        for kind in config.filters:
            for row in ctx.plan.rows:
                cells.append((trial, kind, row, sample))

    def run_cell(cell):
        trial, kind, row, sample = cell
        ctx = contexts[trial]
        flags = []
        if kind in LEARNED_KINDS and not row.learned_feasible:
            return TrialReport(
                filter_id=kind, r=row.r, trial=trial, seed=config.seed,
                size_bits=0, workload=workload.to_dict(), n_queries=0,
                q_fp=0, q_n=0,
                checkpoints=[Checkpoint(0, 0, 0, 0)],
                query_set_hash=qhash, flags=["infeasible_budget"],
            )
        build_seed = config.trial_seed(trial) * 31 + row.r
        flt = _build_cell(kind, positives, row, ctx, sample, build_seed, config)
        refused = getattr(flt, "_bench_refused", 0)
        if refused:
            flags.append(f"inserts_refused={refused}")
        adaptive = kind in ADAPTIVE_KINDS
        if workload.kind == "adversarial":
            out = adversarial_driver(
                dataset, flt, workload.count, workload.d, workload.seed,
                live_positives=truth,
            )
            q_fp, q_tn = out.n_false_positives, out.n_true_negatives
            flags.extend(out.flags)
        else:
            q_fp, q_tn = run_query_stream(flt, queries, truth, adaptive)
        return TrialReport(
            filter_id=kind, r=row.r, trial=trial, seed=config.seed,
            size_bits=flt.size_bits(), workload=workload.to_dict(),
            n_queries=len(queries), q_fp=q_fp, q_n=q_tn,
            checkpoints=[Checkpoint(0, 0, q_fp, q_tn)],
            query_set_hash=qhash, flags=flags,
        )

    n_threads = _threads()
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            return list(pool.map(run_cell, cells))
    return [run_cell(c) for c in cells]


# -- dynamic workload -------------------------------------------------------------


def _probe_set(dataset: Dataset, live: set[bytes], size: int, seed: int) -> list[bytes]:
    """Seeded uniform draws from the *current* negatives (keys not live)."""
    negatives = [k for k in dataset.keys if k not in live]
    idx = np.random.default_rng(seed).integers(0, len(negatives), size=size)
    return [negatives[i] for i in idx]


def _instantaneous_fpr(flt, probes) -> tuple[int, int]:
    """Probe-set FPR with adaptation suppressed (plain queries only)."""
    fp = sum(flt.query(p) for p in probes)
    return fp, len(probes) - fp


def run_dynamic_experiment(
    dataset: Dataset, config: BenchConfig, r: int = 5
) -> list[TrialReport]:
    """Churn workload: 100 instantaneous-FPR checkpoints over a uniform
    stream, a churn every 10 checkpoints, filters rebuilt at each churn,
    models retrained only when config.retrain is set."""
    schedule = churn_schedule(dataset, config.seed)
    spec = WorkloadSpec("dynamic", count=config.queries, seed=config.seed)
    queries = generate_queries(dataset, spec)
    qhash = f"{fold_sequence_hash(queries):016x}"
    step = len(queries) // 100

    base_ctx = make_trial_context(dataset, config, trial=0)
    row = base_ctx.plan.row(r)

    reports = {}
    filters = {}
    live = set(schedule.live)

    def sample_for(truth, churn_idx):
        probe_seed = config.seed * 7919 + churn_idx
        sample_queries = gen_uniform(dataset, max(len(queries) // 4, 1), probe_seed)
        return NegativeSample.from_queries(sample_queries, truth)

    def rebuild_all(ctx, churn_idx):
        truth = set(schedule.live)
        sample = (
            sample_for(truth, churn_idx) if "stacked" in config.filters else None
        )
        for kind in config.filters:
            if kind in LEARNED_KINDS and not row.learned_feasible:
                continue
            build_seed = config.seed * 31 + churn_idx * 7 + row.r
            filters[kind] = build_filter(
                kind, list(schedule.live), row, build_seed,
                scorer=ctx.scorer, neg_train_scores=ctx.neg_train_scores,
                sample=sample,
                lbf_threshold=config.lbf_threshold,
                adabf_params=config.adabf_params,
                plbf_params=config.plbf_params,
            )
        return truth

    def retrained_context(churn_idx):
        """Retrain on the current live set as positives."""
        live_set = set(schedule.live)
        records = [
            Record(rec.key, 1 if rec.key in live_set else 0, rec.features)
            for rec in dataset.records
        ]
        shifted = Dataset(records, name=dataset.name + f"@churn{churn_idx}")
        return make_trial_context(shifted, config, trial=churn_idx)

    ctx = base_ctx
    truth = rebuild_all(ctx, churn_idx=0)
    for kind in config.filters:
        reports[kind] = TrialReport(
            filter_id=kind, r=r, trial=0, seed=config.seed,
            size_bits=filters[kind].size_bits() if kind in filters else 0,
            workload=spec.to_dict(), n_queries=len(queries), q_fp=0, q_n=0,
            checkpoints=[], query_set_hash=qhash,
            flags=[] if kind in filters else ["infeasible_budget"],
        )

    probes = _probe_set(dataset, live, config.probe_size, config.seed)
    churns_done = 0
    for c in range(1, 101):
        window = queries[(c - 1) * step : c * step]
        for kind, flt in filters.items():
            q_fp, q_tn = run_query_stream(
                flt, window, truth, kind in ADAPTIVE_KINDS
            )
            rep = reports[kind]
            rep.q_fp += q_fp
            rep.q_n += q_tn
        if c % 10 == 0 and churns_done < schedule.n_churns:
            churn_apply(schedule, churns_done)
            churns_done += 1
            live = set(schedule.live)
            if config.retrain:
                ctx = retrained_context(churns_done)
            truth = rebuild_all(ctx, churns_done)
            probes = _probe_set(
                dataset, live, config.probe_size, config.seed + churns_done
            )
        for kind, flt in filters.items():
            fp, tn = _instantaneous_fpr(flt, probes)
            reports[kind].checkpoints.append(
                Checkpoint(index=c, churn=churns_done, q_fp=fp, q_n=tn)
            )
    return list(reports.values())


# -- timing -----------------------------------------------------------------------


def _chunks(seq, size):
    for i in range(0, len(seq), size):
        yield seq[i : i + size]


def timed_construction(kind, positives, row, ctx, sample, seed, config):
    timer = CategoryTimer()
    wall0 = time.perf_counter_ns()
    if kind in LEARNED_KINDS:
        # each learned filter's construction owns its model's training time
        timer.add("model_training", ctx.training_ns)
    flt = _build_cell(kind, positives, row, ctx, sample, seed, config, clock=timer)
    wall = time.perf_counter_ns() - wall0 + (
        ctx.training_ns if kind in LEARNED_KINDS else 0
    )
    return flt, timer, wall


def timed_query_phase(flt, kind, queries, truth_flags, timer):
    """Batched staged measurement; returns (q_fp, q_tn, wall_ns, vectorize_ns).

    Learned kinds stage vectorize / score / probe separately; vectorization
    is excluded from the query categories and reported on the side.
    """
    vec_ns = 0
    answers = []
    learned = kind in LEARNED_KINDS
    adaptive = kind in ADAPTIVE_KINDS
    wall0 = time.perf_counter_ns()
    if learned:
        vectorize = flt.scorer.vectorize
        score_vector = flt.scorer.score_vector
        probe = flt.probe_stage
        for batch in _chunks(queries, _BATCH):
            t0 = time.perf_counter_ns()
            fvs = [vectorize(k) for k in batch]
            t1 = time.perf_counter_ns()
            scores = [score_vector(fv) for fv in fvs]
            t2 = time.perf_counter_ns()
            answers.extend(probe(k, s) for k, s in zip(batch, scores))
            t3 = time.perf_counter_ns()
            vec_ns += t1 - t0
            timer.add("score_inference", t2 - t1)
            timer.add("filter_query", t3 - t2)
        wall = time.perf_counter_ns() - wall0 - vec_ns
        q_fp, q_tn = _score_answers(answers, truth_flags)
        return q_fp, q_tn, wall, vec_ns
    else:
        query = flt.query
        if adaptive:
            report = flt.report_false_positive
            pos = 0
            for batch in _chunks(queries, _BATCH):
                t0 = time.perf_counter_ns()
                res = [query(k) for k in batch]
                t1 = time.perf_counter_ns()
                # confirming answers against ground truth and adapting on
                # the confirmed false positives is the feedback machinery
                for j, present in enumerate(res):
                    if present and not truth_flags[pos + j]:
                        report(batch[j])
                t2 = time.perf_counter_ns()
                timer.add("filter_query", t1 - t0)
                timer.add("reverse_map_updates", t2 - t1)
                answers.extend(res)
                pos += len(batch)
        else:
            for batch in _chunks(queries, _BATCH):
                t0 = time.perf_counter_ns()
                answers.extend(query(k) for k in batch)
                timer.add("filter_query", time.perf_counter_ns() - t0)
    wall = time.perf_counter_ns() - wall0
    q_fp, q_tn = _score_answers(answers, truth_flags)
    return q_fp, q_tn, wall, vec_ns


def _score_answers(answers, truth_flags) -> tuple[int, int]:
    q_fp = q_tn = 0
    for present, is_member in zip(answers, truth_flags):
        if is_member:
            continue
        if present:
            q_fp += 1
        else:
            q_tn += 1
    return q_fp, q_tn


def run_timing_experiment(
    dataset: Dataset, config: BenchConfig, r: int = 5
) -> list[TrialReport]:
    """Construction and amortized-query timing with category breakdowns."""
    positives = dataset.positives()
    truth = set(positives)
    spec = WorkloadSpec("uniform", count=config.queries, seed=config.seed)
    queries = generate_queries(dataset, spec)
    qhash = f"{fold_sequence_hash(queries):016x}"
    truth_flags = [q in truth for q in queries]
    sample_prefix = queries[: len(queries) // 4]

    reports = []
    for trial in range(config.trials):
        ctx = make_trial_context(dataset, config, trial)
        row = ctx.plan.row(r)
        sample = (
            NegativeSample.from_queries(sample_prefix, truth)
            if "stacked" in config.filters
            else None
        )
        for kind in config.filters:
            if kind in LEARNED_KINDS and not row.learned_feasible:
                continue
            build_seed = config.trial_seed(trial) * 31 + r
            flt, timer, c_wall = timed_construction(
                kind, positives, row, ctx, sample, build_seed, config
            )
            c_split = {
                cat: timer.get(cat)
                for cat in (
                    "filter_inserts",
                    "model_training",
                    "threshold_finding",
                    "reverse_map_updates",
                )
            }
            q_timer = CategoryTimer()
            if kind == "aqf":
                # the runner brackets the whole feedback pass as
                # reverse_map_updates; the internal clock would double-count
                flt._clock = None
            q_fp, q_tn, q_wall, vec_ns = timed_query_phase(
                flt, kind, queries, truth_flags, q_timer
            )
            q_split = {
                cat: q_timer.get(cat)
                for cat in ("filter_query", "score_inference", "reverse_map_updates")
            }
            timing = TimingBreakdown(
                construction=c_split,
                query=q_split,
                construction_wall_ns=c_wall,
                query_wall_ns=q_wall,
                vectorize_ns=vec_ns,
                n_construction_ops=len(positives),
                n_queries=len(queries),
            )
            reports.append(
                TrialReport(
                    filter_id=kind, r=r, trial=trial, seed=config.seed,
                    size_bits=flt.size_bits(), workload=spec.to_dict(),
                    n_queries=len(queries), q_fp=q_fp, q_n=q_tn,
                    checkpoints=[Checkpoint(0, 0, q_fp, q_tn)],
                    query_set_hash=qhash, timing=timing,
                )
            )
    return reports


# -- learned-filter configuration sweeps ----------------------------------------


def leaves_for_model_bytes(target_bytes: int) -> int:
    """Largest leaf budget whose serialized tree fits target_bytes:
    size(L) = 16 + 19(L-1) + 9L = 28L - 3."""
    return max(1, (target_bytes + 3) // 28)


def run_modelprop_experiment(
    dataset: Dataset, config: BenchConfig, r: int = 5
) -> list[TrialReport]:
    """Fixed total size, sweep the share of it spent on the model."""
    positives = dataset.positives()
    truth = set(positives)
    spec = WorkloadSpec("uniform", count=config.queries, seed=config.seed)
    queries = generate_queries(dataset, spec)
    qhash = f"{fold_sequence_hash(queries):016x}"
    fmap = dataset.feature_map()
    if len(fmap) != len(dataset.records):
        raise ValueError("model-proportion sweep needs per-key features")

    base_plan = size_match_plan(dataset.n_pos, (r,), model_bytes=0)
    total_bits = base_plan.row(r).aqf_bits
    kinds = [k for k in config.filters if k in LEARNED_KINDS] or ["adabf", "plbf"]

    reports = []
    for trial in range(config.trials):
        t_seed = config.trial_seed(trial)
        train = build_training_set(dataset, config.neg_fraction, t_seed)
        for share in config.model_shares:
            target_bytes = int(share * total_bits / 8)
            # keep at least the minimum backup room
            cap_bytes = (total_bits - 64) // 8
            leaves = leaves_for_model_bytes(min(target_bytes, cap_bytes))
            tree = train_decision_tree(train, leaves, t_seed)
            scorer = TreeScorer(tree, fmap.__getitem__)
            neg_scores = [
                tree.score_vector(ex.features) for ex in train if ex.label == 0
            ]
            ctx = TrialContext(
                scorer, neg_scores, 0,
                size_match_plan(dataset.n_pos, (r,), scorer.size_bytes),
            )
            row = ctx.plan.row(r)
            for kind in kinds:
                flags = [f"model_share_target={share}"]
                if not row.learned_feasible:
                    flags.append("infeasible_budget")
                    q_fp = q_tn = 0
                    size_bits = 0
                else:
                    flt = _build_cell(
                        kind, positives, row, ctx, None,
                        t_seed * 31 + r, config,
                    )
                    q_fp, q_tn = run_query_stream(flt, queries, truth, False)
                    size_bits = flt.size_bits()
                workload = dict(
                    spec.to_dict(),
                    model_share=share,
                    model_bytes=scorer.size_bytes,
                    leaves=tree.n_leaves,
                )
                reports.append(
                    TrialReport(
                        filter_id=kind, r=r, trial=trial, seed=config.seed,
                        size_bits=size_bits, workload=workload,
                        n_queries=len(queries), q_fp=q_fp, q_n=q_tn,
                        checkpoints=[Checkpoint(0, 0, q_fp, q_tn)],
                        query_set_hash=qhash, flags=flags,
                    )
                )
    return reports


def run_trainprop_experiment(
    dataset: Dataset, config: BenchConfig, r: int = 5
) -> list[TrialReport]:
    """Sweep the negative fraction of the training set at fixed size."""
    positives = dataset.positives()
    truth = set(positives)
    spec = WorkloadSpec("uniform", count=config.queries, seed=config.seed)
    queries = generate_queries(dataset, spec)
    qhash = f"{fold_sequence_hash(queries):016x}"
    kinds = [k for k in config.filters if k in LEARNED_KINDS] or ["lbf", "adabf", "plbf"]

    reports = []
    for frac in config.neg_fractions:
        cfg = dataclasses.replace(config, neg_fraction=frac, filters=tuple(kinds))
        for trial in range(config.trials):
            ctx = make_trial_context(dataset, cfg, trial)
            row = ctx.plan.row(r)
            for kind in kinds:
                flags = []
                if not row.learned_feasible:
                    flags.append("infeasible_budget")
                    q_fp = q_tn = size_bits = 0
                else:
                    flt = _build_cell(
                        kind, positives, row, ctx, None,
                        cfg.trial_seed(trial) * 31 + r, cfg,
                    )
                    q_fp, q_tn = run_query_stream(flt, queries, truth, False)
                    size_bits = flt.size_bits()
                reports.append(
                    TrialReport(
                        filter_id=kind, r=r, trial=trial, seed=config.seed,
                        size_bits=size_bits,
                        workload=dict(spec.to_dict(), neg_fraction=frac),
                        n_queries=len(queries), q_fp=q_fp, q_n=q_tn,
                        checkpoints=[Checkpoint(0, 0, q_fp, q_tn)],
                        query_set_hash=qhash, flags=flags,
                    )
                )
    return reports
