"""Pydantic request/response models shared by the API and the CLI client."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

FilterKindLive = Literal["bloom", "qf", "aqf"]
ExperimentKind = Literal["fpr", "dynamic", "timing", "modelprop", "trainprop"]
WorkloadKind = Literal["one_pass", "uniform", "zipfian", "adversarial"]


class FilterCreateRequest(BaseModel):
    kind: FilterKindLive
    seed: int = 0
    # quotient-family geometry
    q: Optional[int] = None
    r: Optional[int] = None
    # bloom sizing: a space budget plus the expected insert count
    space_bits: Optional[int] = None
    expected_n: Optional[int] = None


class FilterInfo(BaseModel):
    filter_id: str
    kind: str
    size_bits: int
    n_keys: int


class KeysRequest(BaseModel):
    keys: list[str] = Field(min_length=1)


class InsertResponse(BaseModel):
    inserted: int
    refused: int
    size_bits: int


class QueryResponse(BaseModel):
    results: list[bool]


class FeedbackResponse(BaseModel):
    """Per-key adaptation outcomes; always false for non-adaptive kinds."""

    adapted: list[bool]


class ExperimentRequest(BaseModel):
    kind: ExperimentKind
    dataset: str = "synthetic:"
    featurize: Optional[Literal["url"]] = None
    workload: WorkloadKind = "uniform"
    queries: int = 1_000_000
    z: float = 1.5
    d_values: list[float] = [0.02, 0.04, 0.06, 0.08, 0.10]
    r_values: list[int] = [5, 6, 7, 8, 9, 10, 11]
    filters: list[str] = ["bloom", "aqf", "lbf", "adabf", "plbf", "stacked"]
    trials: int = 3
    seed: int = 0
    retrain: bool = False
    neg_fraction: float = 0.3
    max_leaf_nodes: int = 128
    lbf_threshold: float = 0.5
    probe_size: int = 10_000
    model_shares: list[float] = [0.1, 0.3, 0.5, 0.7, 0.9]
    neg_fractions: list[float] = [0.1, 0.3, 0.5, 0.9]


class ExperimentResponse(BaseModel):
    schema_id: str = Field(alias="schema")
    reports: list[dict]

    model_config = {"populate_by_name": True}
