"""Dataset ingestion: CSV files and synthetic dataset specs.

CSV format: header ``key,label[,f1,...,fK]`` with label in {0,1}; keys must
be unique.  URLs can be auto-featurized at ingest with featurize="url".

Synthetic specs look like ``synthetic:n_pos=10000,n_neg=50000,dim=8,sep=0.9,
seed=1`` and delegate to the seeded two-Gaussian generator.
"""

from __future__ import annotations

import csv

import numpy as np

from ..scorer import featurize_url
from ..workloads import Dataset, Record, gen_synthetic_dataset

_SYNTH_DEFAULTS = {"n_pos": 10_000, "n_neg": 50_000, "dim": 8, "sep": 0.9, "seed": 0}


def parse_synthetic_spec(spec: str) -> Dataset:
    body = spec.split(":", 1)[1] if spec.startswith("synthetic:") else spec
    params = dict(_SYNTH_DEFAULTS)
    if body:
        for part in body.split(","):
            k, _, v = part.partition("=")
            k = k.strip()
            if k not in params:
                raise ValueError(f"unknown synthetic parameter {k!r}")
            params[k] = float(v) if k == "sep" else int(v)
    return gen_synthetic_dataset(
        n_pos=params["n_pos"],
        n_neg=params["n_neg"],
        feature_dim=params["dim"],
        separability=params["sep"],
        seed=params["seed"],
        name=spec,
    )


def ingest_dataset(path: str, featurize: str | None = None) -> Dataset:
    """Load ``key,label[,f1,...]`` rows; raises on duplicates/bad labels."""
    records = []
    seen: set[bytes] = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "key" or header[1] != "label":
            raise ValueError(f"{path}: header must start with 'key,label'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            key_text = row[0]
            if not key_text:
                raise ValueError(f"{path}:{lineno}: empty key")
            key = key_text.encode()
            if key in seen:
                raise ValueError(f"{path}:{lineno}: duplicate key {key_text!r}")
            seen.add(key)
            if row[1] not in ("0", "1"):
                raise ValueError(
                    f"{path}:{lineno}: label must be 0 or 1, got {row[1]!r}"
                )
            label = int(row[1])
            if featurize == "url":
                features = featurize_url(key_text)
            elif len(row) > 2:
                features = np.array([float(x) for x in row[2:]], dtype=np.float64)
            else:
                features = None
            records.append(Record(key, label, features))
    return Dataset(records, name=path)


def export_dataset(dataset: Dataset, path: str) -> None:
    """Inverse of ingest: re-ingesting the file yields an equal dataset."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        width = 0
        for r in dataset.records:
            if r.features is not None:
                width = len(r.features)
                break
        writer.writerow(["key", "label"] + [f"f{i+1}" for i in range(width)])
        for r in dataset.records:
            row = [r.key.decode(), str(r.label)]
            if r.features is not None:
                row += [repr(float(x)) for x in r.features]
            writer.writerow(row)


def load_dataset(source: str, featurize: str | None = None) -> Dataset:
    if source.startswith("synthetic:") or source == "synthetic":
        return parse_synthetic_spec(source)
    return ingest_dataset(source, featurize=featurize)
