"""Trial reports and emission.

JSON documents are schema-tagged ("fcbench/1") and canonically formatted so
emit -> load -> emit is byte-identical.  CSV is plot-ready: exactly one row
per filter x r x trial x checkpoint (static runs carry a single synthetic
checkpoint holding the final numbers).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

SCHEMA = "fcbench/1"

CSV_COLUMNS = [
    "schema",
    "filter",
    "r",
    "trial",
    "seed",
    "workload_kind",
    "checkpoint",
    "churn",
    "fpr",
    "q_fp",
    "q_n",
    "size_bits",
    "n_queries",
    "query_set_hash",
    "flags",
    "construction_wall_ns",
    "query_wall_ns",
    "vectorize_ns",
    "c_filter_inserts_ns",
    "c_model_training_ns",
    "c_threshold_finding_ns",
    "c_reverse_map_updates_ns",
    "q_filter_query_ns",
    "q_score_inference_ns",
    "q_reverse_map_updates_ns",
]


def compute_fpr(q_fp: int, q_tn: int) -> float | None:
    """|Q_FP| / (|Q_FP| + |Q_N|); None when no negatives were queried."""
    denom = q_fp + q_tn
    return q_fp / denom if denom else None


@dataclass
class Checkpoint:
    index: int
    churn: int
    q_fp: int
    q_n: int

    @property
    def fpr(self) -> float | None:
        return compute_fpr(self.q_fp, self.q_n)


@dataclass
class TimingBreakdown:
    construction: dict[str, int] = field(default_factory=dict)
    query: dict[str, int] = field(default_factory=dict)
    construction_wall_ns: int = 0
    query_wall_ns: int = 0
    vectorize_ns: int = 0
    n_construction_ops: int = 0
    n_queries: int = 0

    def per_query_ns(self, category: str) -> float:
        return self.query.get(category, 0) / max(1, self.n_queries)

    def coverage(self) -> tuple[float, float]:
        """(construction, query) fraction of wall time the categories cover."""
        c = sum(self.construction.values()) / max(1, self.construction_wall_ns)
        q = sum(self.query.values()) / max(1, self.query_wall_ns)
        return c, q


@dataclass
class TrialReport:
    filter_id: str
    r: int
    trial: int
    seed: int
    size_bits: int
    workload: dict
    n_queries: int
    q_fp: int
    q_n: int
    checkpoints: list[Checkpoint]
    query_set_hash: str
    timing: TimingBreakdown | None = None
    flags: list[str] = field(default_factory=list)

    @property
    def fpr(self) -> float | None:
        return compute_fpr(self.q_fp, self.q_n)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fpr"] = self.fpr
        for cp, raw in zip(self.checkpoints, d["checkpoints"]):
            raw["fpr"] = cp.fpr
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrialReport":
        d = dict(d)
        d.pop("fpr", None)
        cps = [
            Checkpoint(c["index"], c["churn"], c["q_fp"], c["q_n"])
            for c in d.pop("checkpoints")
        ]
        timing = d.pop("timing", None)
        tb = TimingBreakdown(**timing) if timing else None
        return cls(checkpoints=cps, timing=tb, **d)


def document(reports: list[TrialReport]) -> dict:
    return {"schema": SCHEMA, "reports": [r.to_dict() for r in reports]}


def load_document(text: str) -> list[TrialReport]:
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unsupported schema {doc.get('schema')!r}")
    return [TrialReport.from_dict(d) for d in doc["reports"]]


def render_json(reports: list[TrialReport]) -> str:
    return json.dumps(document(reports), sort_keys=True, indent=2) + "\n"


def render_csv(reports: list[TrialReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rep in reports:
        t = rep.timing or TimingBreakdown()
        base = {
            "schema": SCHEMA,
            "filter": rep.filter_id,
            "r": rep.r,
            "trial": rep.trial,
            "seed": rep.seed,
            "workload_kind": rep.workload.get("kind", ""),
            "size_bits": rep.size_bits,
            "n_queries": rep.n_queries,
            "query_set_hash": rep.query_set_hash,
            "flags": ";".join(rep.flags),
            "construction_wall_ns": t.construction_wall_ns,
            "query_wall_ns": t.query_wall_ns,
            "vectorize_ns": t.vectorize_ns,
            "c_filter_inserts_ns": t.construction.get("filter_inserts", 0),
            "c_model_training_ns": t.construction.get("model_training", 0),
            "c_threshold_finding_ns": t.construction.get("threshold_finding", 0),
            "c_reverse_map_updates_ns": t.construction.get("reverse_map_updates", 0),
            "q_filter_query_ns": t.query.get("filter_query", 0),
            "q_score_inference_ns": t.query.get("score_inference", 0),
            "q_reverse_map_updates_ns": t.query.get("reverse_map_updates", 0),
        }
        for cp in rep.checkpoints:
            row = dict(
                base,
                checkpoint=cp.index,
                churn=cp.churn,
                fpr="" if cp.fpr is None else repr(cp.fpr),
                q_fp=cp.q_fp,
                q_n=cp.q_n,
            )
            writer.writerow([row[c] for c in CSV_COLUMNS])
    return buf.getvalue()


def emit_report(reports: list[TrialReport], fmt: str, path: str) -> None:
    if fmt == "json":
        text = render_json(reports)
    elif fmt == "csv":
        text = render_csv(reports)
    else:
        raise ValueError(f"format must be json or csv, got {fmt!r}")
    with open(path, "w") as fh:
        fh.write(text)
