"""Schema-checked CSV loading, the mutable/immutable feature partition and
stratified subsampling."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from .errors import ContractViolation, ParseError, SchemaError
from .numerics import RngStream

KINDS = ("numeric", "categorical", "label", "ignored")
MUTABILITIES = ("mutable", "immutable", "n/a")
BUILTIN_SCHEMAS = ("nsl_kdd", "unsw_nb15")


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    mutability: str = "n/a"


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered column contract for one dataset family.

    ``benign_labels`` / ``malicious_labels`` drive the binary collapse; an
    empty malicious list means every non-benign label counts as an attack.
    """

    name: str
    columns: tuple[Column, ...]
    benign_labels: tuple[str, ...] = ("normal",)
    malicious_labels: tuple[str, ...] = ()
    missing_markers: tuple[str, ...] = ("", "?")
    header: str = "auto"

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate column names: {dupes}")
        n_label = sum(c.kind == "label" for c in self.columns)
        if n_label != 1:
            raise SchemaError(f"schema needs exactly one label column, found {n_label}")
        for c in self.columns:
            if c.kind not in KINDS:
                raise SchemaError(f"column {c.name!r}: unknown kind {c.kind!r}")
            if c.mutability not in MUTABILITIES:
                raise SchemaError(f"column {c.name!r}: unknown mutability {c.mutability!r}")
            if c.kind in ("numeric", "categorical") and c.mutability not in ("mutable", "immutable"):
                raise SchemaError(f"feature column {c.name!r} needs a mutable/immutable assignment")
        if self.header not in ("auto", "present", "absent"):
            raise SchemaError(f"header must be auto/present/absent, got {self.header!r}")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def label_index(self) -> int:
        return next(i for i, c in enumerate(self.columns) if c.kind == "label")

    @property
    def feature_columns(self) -> list[Column]:
        return [c for c in self.columns if c.kind in ("numeric", "categorical")]

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.feature_columns]

    @property
    def mutable_mask(self) -> np.ndarray:
        return np.array([c.mutability == "mutable" for c in self.feature_columns], dtype=bool)

    @property
    def mutable_indices(self) -> np.ndarray:
        return np.flatnonzero(self.mutable_mask)

    @property
    def immutable_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.mutable_mask)

    def binary_label(self, raw: str, line: int | None = None) -> int:
        value = raw.strip()
        if value in self.benign_labels:
            return 0
        if not self.malicious_labels or value in self.malicious_labels:
            return 1
        raise SchemaError(
            f"unknown label {value!r}" + (f" on line {line}" if line is not None else "")
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "version": 1,
            "header": self.header,
            "missing_markers": list(self.missing_markers),
            "label": {"benign": list(self.benign_labels), "malicious": list(self.malicious_labels)},
            "columns": [
                {"name": c.name, "kind": c.kind, "mutability": c.mutability} for c in self.columns
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSchema":
        try:
            cols = tuple(
                Column(str(c["name"]), str(c["kind"]), str(c.get("mutability", "n/a")))
                for c in doc["columns"]
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema document: {exc}") from exc
        label = doc.get("label", {})
        return cls(
            name=str(doc.get("name", "dataset")),
            columns=cols,
            benign_labels=tuple(str(v) for v in label.get("benign", ["normal"])),
            malicious_labels=tuple(str(v) for v in label.get("malicious", [])),
            missing_markers=tuple(str(v) for v in doc.get("missing_markers", ["", "?"])),
            header=str(doc.get("header", "auto")),
        )

    def checksum(self) -> str:
        blob = yaml.safe_dump(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def load_schema(path_or_name: str | Path) -> FeatureSchema:
    """Load a schema sidecar file, or a built-in one by name."""
    if str(path_or_name) in BUILTIN_SCHEMAS:
        text = resources.files("advnids.schemas").joinpath(f"{path_or_name}.yaml").read_text()
    else:
        path = Path(path_or_name)
        if not path.exists():
            raise FileNotFoundError(f"schema file not found: {path}")
        text = path.read_text()
    return FeatureSchema.from_dict(yaml.safe_load(text))


def save_schema(schema: FeatureSchema, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(schema.to_dict(), sort_keys=False, width=120))


@dataclass
class RawDataset:
    """String-valued rows exactly as read, plus the collapsed binary labels."""

    schema: FeatureSchema
    rows: list[list[str]]
    labels: np.ndarray
    source: str = ""
    checksum: str = ""

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[str]:
        j = self.schema.names.index(name)
        return [r[j] for r in self.rows]

    def subset(self, idx: Iterable[int]) -> "RawDataset":
        idx = list(idx)
        return RawDataset(
            self.schema, [self.rows[i] for i in idx], self.labels[idx].copy(), self.source, self.checksum
        )


@dataclass
class LabeledDataset:
    """Fully numeric features with binary labels (1 = malicious)."""

    features: np.ndarray
    labels: np.ndarray
    schema: FeatureSchema
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.features.ndim != 2:
            raise ContractViolation("features must be a 2-D matrix")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ContractViolation(
                f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels"
            )
        if not np.all(np.isin(self.labels, (0, 1))):
            raise ContractViolation("labels must be 0 or 1")
        if not np.all(np.isfinite(self.features)):
            raise ContractViolation("features contain missing or non-finite values")
        if not self.feature_names:
            self.feature_names = self.schema.feature_names
        if len(self.feature_names) != self.features.shape[1]:
            raise ContractViolation("feature_names length does not match feature columns")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.schema, self.feature_names)

    def malicious(self) -> "LabeledDataset":
        return self.subset(np.flatnonzero(self.labels == 1))

    def benign(self) -> "LabeledDataset":
        return self.subset(np.flatnonzero(self.labels == 0))

    def with_rows(self, features: np.ndarray, labels: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(features, labels, self.schema, self.feature_names)


def file_checksum(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _looks_like_header(row: Sequence[str], schema: FeatureSchema) -> bool:
    return [v.strip() for v in row] == schema.names


def load_dataset(path: str | Path, schema: FeatureSchema) -> RawDataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    width = len(schema.columns)
    rows: list[list[str]] = []
    labels: list[int] = []
    label_j = schema.label_index
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and schema.header != "absent":
                if schema.header == "present" or _looks_like_header(row, schema):
                    continue
            if not row:
                continue
            if len(row) != width:
                raise ParseError(f"expected {width} fields, found {len(row)}", line=lineno)
            labels.append(schema.binary_label(row[label_j], line=lineno))
            rows.append(row)
    return RawDataset(
        schema=schema,
        rows=rows,
        labels=np.asarray(labels, dtype=np.int64),
        source=str(path),
        checksum=file_checksum(path),
    )


def collapse_labels(values: Sequence[str], schema: FeatureSchema) -> np.ndarray:
    """Binary collapse of raw label strings; already-binary input passes through."""
    out = []
    for v in values:
        s = str(v).strip()
        if s in ("0", "1") and s not in schema.benign_labels and s not in schema.malicious_labels:
            out.append(int(s))
        else:
            out.append(schema.binary_label(s))
    return np.asarray(out, dtype=np.int64)


def stratified_subsample(data: LabeledDataset, n: int, rng: RngStream) -> LabeledDataset:
    """Draw ``n`` rows without replacement, preserving the class ratio.

    The malicious share is ``round(n * p)`` so each class is within one row of
    its proportional allocation; the result is shuffled.
    """
    total = len(data)
    if n > total:
        raise ContractViolation(f"cannot draw {n} rows from a dataset of {total}")
    if n < 0:
        raise ContractViolation("n must be non-negative")
    mal = np.flatnonzero(data.labels == 1)
    ben = np.flatnonzero(data.labels == 0)
    if mal.size == 0 or ben.size == 0:
        raise ContractViolation("stratified subsampling needs both classes present")
    n_mal = int(np.floor(n * mal.size / total + 0.5))
    n_mal = min(max(n_mal, n - ben.size), mal.size)
    n_ben = n - n_mal
    pick_mal = rng.choice(mal, size=n_mal, replace=False)
    pick_ben = rng.choice(ben, size=n_ben, replace=False)
    idx = np.concatenate([pick_mal, pick_ben])
    idx = idx[rng.permutation(idx.size)]
    return data.subset(idx)
