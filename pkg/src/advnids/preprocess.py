"""Median/mode imputation, ordinal encoding and standard scaling, fitted on the
training split only and persisted so every later transform is identical."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dataio import FeatureSchema, LabeledDataset, RawDataset
from .errors import ContractViolation, SchemaError

PIPELINE_FORMAT = "advnids.pipeline"
PIPELINE_VERSION = 1
STD_CONVENTION = "population"


@dataclass
class ColumnStats:
    name: str
    kind: str
    mean: float
    std: float
    scaled: bool
    observed_min: float
    observed_max: float
    median: float | None = None
    mode: str | None = None
    ordinal_map: dict[str, int] | None = None
    unknown_ordinal: int | None = None


@dataclass
class FittedPipeline:
    schema: FeatureSchema
    columns: list[ColumnStats]
    std_convention: str = STD_CONVENTION

    @property
    def n_features(self) -> int:
        return len(self.columns)

    @property
    def lower(self) -> np.ndarray:
        """Standardized image of each column's observed training minimum."""
        return np.array([_scale_value(c, c.observed_min) for c in self.columns])

    @property
    def upper(self) -> np.ndarray:
        return np.array([_scale_value(c, c.observed_max) for c in self.columns])

    def to_dict(self) -> dict:
        return {
            "format": PIPELINE_FORMAT,
            "version": PIPELINE_VERSION,
            "std_convention": self.std_convention,
            "schema": self.schema.to_dict(),
            "columns": [asdict(c) for c in self.columns],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FittedPipeline":
        if doc.get("format") != PIPELINE_FORMAT:
            raise SchemaError("not a fitted pipeline document")
        if doc.get("version") != PIPELINE_VERSION:
            raise SchemaError(f"unsupported pipeline version {doc.get('version')}")
        return cls(
            schema=FeatureSchema.from_dict(doc["schema"]),
            columns=[ColumnStats(**c) for c in doc["columns"]],
            std_convention=doc.get("std_convention", STD_CONVENTION),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "FittedPipeline":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def checksum(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()


def _scale_value(c: ColumnStats, v):
    return (v - c.mean) / c.std if c.scaled else v - c.mean


def _parse_numeric(values: list[str], name: str, missing: set[str]) -> tuple[np.ndarray, np.ndarray]:
    out = np.empty(len(values), dtype=np.float64)
    miss = np.zeros(len(values), dtype=bool)
    for i, v in enumerate(values):
        s = v.strip()
        if s in missing:
            miss[i] = True
            out[i] = np.nan
            continue
        try:
            out[i] = float(s)
        except ValueError:
            raise SchemaError(f"column {name!r}: non-numeric value {s!r} at row {i}") from None
        if not np.isfinite(out[i]):
            raise SchemaError(f"column {name!r}: non-finite value {s!r} at row {i}")
    return out, miss


def _column_values(data: RawDataset, j: int) -> list[str]:
    return [r[j] for r in data.rows]


def fit(train: RawDataset) -> FittedPipeline:
    if len(train) == 0:
        raise ContractViolation("cannot fit a pipeline on an empty dataset")
    schema = train.schema
    missing = set(schema.missing_markers)
    stats: list[ColumnStats] = []
    for j, col in enumerate(schema.columns):
        if col.kind not in ("numeric", "categorical"):
            continue
        raw = _column_values(train, j)
        if col.kind == "numeric":
            vals, miss = _parse_numeric(raw, col.name, missing)
            if miss.all():
                raise ContractViolation(f"column {col.name!r} is entirely missing")
            median = float(np.median(vals[~miss]))
            vals[miss] = median
            extra = {"median": median}
        else:
            stripped = [v.strip() for v in raw]
            present = [v for v in stripped if v not in missing]
            if not present:
                raise ContractViolation(f"column {col.name!r} is entirely missing")
            ordinal: dict[str, int] = {}
            counts: dict[str, int] = {}
            for v in present:
                if v not in ordinal:
                    ordinal[v] = len(ordinal)
                counts[v] = counts.get(v, 0) + 1
            # ties resolve to the earliest-seen category
            mode = max(ordinal, key=lambda k: (counts[k], -ordinal[k]))
            vals = np.array([ordinal[v if v not in missing else mode] for v in stripped], dtype=np.float64)
            extra = {"mode": mode, "ordinal_map": ordinal, "unknown_ordinal": len(ordinal)}
        mean = float(vals.mean())
        std = float(vals.std())
        scaled = std > 0.0
        stats.append(
            ColumnStats(
                name=col.name,
                kind=col.kind,
                mean=mean,
                std=std if scaled else 0.0,
                scaled=scaled,
                observed_min=float(vals.min()),
                observed_max=float(vals.max()),
                **extra,
            )
        )
    return FittedPipeline(schema=schema, columns=stats)


def encode(pipe: FittedPipeline, data: RawDataset) -> np.ndarray:
    """Impute and ordinal-encode ``data`` into raw (unscaled) numeric units."""
    if data.schema.names != pipe.schema.names:
        raise ContractViolation("dataset schema does not match the fitted pipeline schema")
    missing = set(pipe.schema.missing_markers)
    index = {name: j for j, name in enumerate(pipe.schema.names)}
    out = np.empty((len(data), pipe.n_features), dtype=np.float64)
    for k, c in enumerate(pipe.columns):
        raw = _column_values(data, index[c.name])
        if c.kind == "numeric":
            vals, miss = _parse_numeric(raw, c.name, missing)
            vals[miss] = c.median
        else:
            fallback = c.ordinal_map[c.mode]
            vals = np.array(
                [
                    fallback if s in missing else c.ordinal_map.get(s, c.unknown_ordinal)
                    for s in (v.strip() for v in raw)
                ],
                dtype=np.float64,
            )
        out[:, k] = vals
    return out


def scale(pipe: FittedPipeline, encoded: np.ndarray) -> np.ndarray:
    mean = np.array([c.mean for c in pipe.columns])
    std = np.array([c.std if c.scaled else 1.0 for c in pipe.columns])
    return (encoded - mean) / std


def transform(pipe: FittedPipeline, data: RawDataset) -> LabeledDataset:
    features = scale(pipe, encode(pipe, data))
    return LabeledDataset(features, data.labels.copy(), pipe.schema)


def clip_to_domain(pipe: FittedPipeline, x) -> np.ndarray:
    """Clamp every coordinate into the standardized training range."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != pipe.n_features:
        raise ContractViolation(f"expected {pipe.n_features} features, got {x.shape[-1]}")
    return np.clip(x, pipe.lower, pipe.upper)
