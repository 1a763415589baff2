"""FastAPI application.

Live filter instances (bloom, quotient, adaptive quotient) are held in an
in-process registry keyed by id: clients create a filter, insert keys, run
membership queries, and report confirmed false positives back to adaptive
instances.  Experiment endpoints execute a full benchmark run server-side
and return the report document.

State is process-local; run a single worker.
"""

from __future__ import annotations

import uuid

from fastapi import FastAPI, HTTPException

from ..adaptive import AdaptiveQF
from ..bloom import BloomFilter
from ..quotient import FingerprintScheme, QuotientFilter
from .models import (
    ExperimentRequest,
    FeedbackResponse,
    FilterCreateRequest,
    FilterInfo,
    InsertResponse,
    KeysRequest,
    QueryResponse,
)
from .runner import run_experiment_request


class _Registry:
    def __init__(self):
        self._filters: dict[str, tuple[str, object, int]] = {}

    def add(self, kind: str, obj) -> str:
        fid = uuid.uuid4().hex[:12]
        self._filters[fid] = (kind, obj, 0)
        return fid

    def get(self, fid: str):
        entry = self._filters.get(fid)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"no filter {fid!r}")
        return entry

    def bump(self, fid: str, inserted: int):
        kind, obj, n = self._filters[fid]
        self._filters[fid] = (kind, obj, n + inserted)

    def remove(self, fid: str):
        if fid not in self._filters:
            raise HTTPException(status_code=404, detail=f"no filter {fid!r}")
        del self._filters[fid]

    def items(self):
        return self._filters.items()


def _make_filter(req: FilterCreateRequest):
    if req.kind == "bloom":
        if req.space_bits is None or req.expected_n is None:
            raise HTTPException(
                status_code=422,
                detail="bloom needs space_bits and expected_n",
            )
        try:
            return BloomFilter.build(req.space_bits, req.expected_n, req.seed)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
    if req.q is None or req.r is None:
        raise HTTPException(status_code=422, detail=f"{req.kind} needs q and r")
    try:
        scheme = FingerprintScheme(req.q, req.r)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    if req.kind == "qf":
        return QuotientFilter(scheme, req.seed)
    return AdaptiveQF(scheme, req.seed)


def create_app() -> FastAPI:
    app = FastAPI(title="fcbench", version="0.1.0")
    registry = _Registry()

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/filters", response_model=FilterInfo)
    def create_filter(req: FilterCreateRequest):
        obj = _make_filter(req)
        fid = registry.add(req.kind, obj)
        return FilterInfo(
            filter_id=fid, kind=req.kind, size_bits=obj.size_bits(), n_keys=0
        )

    @app.get("/filters", response_model=list[FilterInfo])
    def list_filters():
        return [
            FilterInfo(filter_id=fid, kind=kind, size_bits=obj.size_bits(), n_keys=n)
            for fid, (kind, obj, n) in registry.items()
        ]

    @app.get("/filters/{fid}", response_model=FilterInfo)
    def filter_info(fid: str):
        kind, obj, n = registry.get(fid)
        return FilterInfo(
            filter_id=fid, kind=kind, size_bits=obj.size_bits(), n_keys=n
        )

    @app.delete("/filters/{fid}")
    def delete_filter(fid: str):
        registry.remove(fid)
        return {"deleted": fid}

    @app.post("/filters/{fid}/keys", response_model=InsertResponse)
    def insert_keys(fid: str, req: KeysRequest):
        kind, obj, _ = registry.get(fid)
        inserted = refused = 0
        for key in req.keys:
            ok = obj.insert(key.encode())
            if ok or ok is None:  # bloom inserts return None, never refuse
                inserted += 1
            else:
                refused += 1
        registry.bump(fid, inserted)
        return InsertResponse(
            inserted=inserted, refused=refused, size_bits=obj.size_bits()
        )

    @app.post("/filters/{fid}/query", response_model=QueryResponse)
    def query_keys(fid: str, req: KeysRequest):
        _, obj, _ = registry.get(fid)
        return QueryResponse(results=[obj.query(k.encode()) for k in req.keys])

    @app.post("/filters/{fid}/feedback", response_model=FeedbackResponse)
    def report_false_positives(fid: str, req: KeysRequest):
        _, obj, _ = registry.get(fid)
        report = getattr(obj, "report_false_positive", None)
        if report is None:
            return FeedbackResponse(adapted=[False] * len(req.keys))
        return FeedbackResponse(adapted=[report(k.encode()) for k in req.keys])

    @app.post("/experiments/{kind}")
    def run_experiment(kind: str, req: ExperimentRequest):
        if kind != req.kind:
            raise HTTPException(
                status_code=422,
                detail=f"path kind {kind!r} != body kind {req.kind!r}",
            )
        try:
            return run_experiment_request(req)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    return app
