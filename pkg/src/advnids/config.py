"""Run configuration: defaults, YAML/JSON loading, ``key=value`` overrides and
a canonical content hash used to key artifact directories."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .dataio import BUILTIN_SCHEMAS
from .errors import ContractViolation
from .models import DEFAULT_HYPERPARAMETERS, canonical_algorithm

BASELINES = ("DT", "GB", "Bagging", "KNN", "LR", "MLP", "LDA")
CONDITIONS = ("unmodified", "GAN", "FGSM", "all")

DEFAULTS: dict = {
    "dataset": {
        "name": "nsl_kdd",
        "train_path": None,
        "test_path": None,
        "schema": None,
        "split": "official",
        "test_fraction": 0.2,
        "synthetic": {"enabled": True, "train_rows": 20000, "test_rows": 5000, "seed": 7},
    },
    "subsample": {"train": 5000, "test": 1000},
    "seeds": [0],
    "models": {"baselines": list(BASELINES), "hyperparameters": {}},
    "attack": {
        "methods": ["gan", "fgsm"],
        "fgsm_eps": 0.1,
        "eps_sweep": [0.01, 0.05, 0.1, 0.2],
        "gan": {},
    },
    "defense": {
        "folds": 5,
        "fraction": 0.5,
        "meta_mode": "proba",
        "ae_epochs": 30,
        "ae_lr": 0.01,
        "ae_validation_fraction": 0.2,
        "retrain_ae": False,
        "cross_test": True,
    },
    "output": {"dir": "runs"},
}


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        path = f"{where}{key}"
        if key not in base:
            raise ContractViolation(f"unknown config key {path!r}")
        if isinstance(base[key], dict) and key not in ("gan", "hyperparameters"):
            if not isinstance(val, dict):
                raise ContractViolation(f"config key {path!r} expects a mapping")
            out[key] = _merge(base[key], val, path + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def parse_override(item: str) -> tuple[list[str], object]:
    """``a.b.c=value``; the value is parsed as YAML so numbers and lists work."""
    key, sep, raw = item.partition("=")
    if not sep or not key.strip():
        raise ContractViolation(f"override {item!r} is not of the form key=value")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ContractViolation(f"override {item!r}: cannot parse value ({exc})") from None
    return key.strip().split("."), value


def apply_override(doc: dict, item: str) -> dict:
    keys, value = parse_override(item)
    node = {}
    cur = node
    for k in keys[:-1]:
        cur[k] = {}
        cur = cur[k]
    cur[keys[-1]] = value
    return _merge(doc, node)


class RunConfig:
    """Validated, immutable-by-convention view over a nested config mapping."""

    def __init__(self, doc: dict | None = None):
        self.doc = _merge(DEFAULTS, doc or {})
        self._validate()

    # -- construction
    @classmethod
    def load(cls, path=None, overrides=()) -> "RunConfig":
        doc: dict = {}
        if path is not None:
            p = Path(path)
            if not p.exists():
                raise FileNotFoundError(f"config file not found: {p}")
            text = p.read_text(encoding="utf-8")
            try:
                doc = (json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)) or {}
            except (yaml.YAMLError, json.JSONDecodeError) as exc:
                raise ContractViolation(f"cannot parse config {p}: {exc}") from None
            if not isinstance(doc, dict):
                raise ContractViolation(f"config {p} must contain a mapping")
        merged = _merge(DEFAULTS, doc)
        for item in overrides:
            merged = apply_override(merged, item)
        return cls(merged)

    def with_overrides(self, *items: str) -> "RunConfig":
        doc = self.doc
        for item in items:
            doc = apply_override(doc, item)
        return RunConfig(doc)

    # -- validation
    def _validate(self) -> None:
        d = self.doc
        ds = d["dataset"]
        if ds["schema"] is None and ds["name"] not in BUILTIN_SCHEMAS:
            raise ContractViolation(f"dataset {ds['name']!r} has no built-in schema; set dataset.schema")
        if ds["split"] not in ("official", "random"):
            raise ContractViolation("dataset.split must be 'official' or 'random'")
        if not 0.0 < float(ds["test_fraction"]) < 1.0:
            raise ContractViolation("dataset.test_fraction must lie in (0, 1)")
        for key in ("train", "test"):
            n = d["subsample"][key]
            if n is not None and (not isinstance(n, int) or n < 10):
                raise ContractViolation(f"subsample.{key} must be an integer >= 10 or null")
        seeds = d["seeds"]
        if isinstance(seeds, int):
            d["seeds"] = seeds = [seeds]
        if not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
            raise ContractViolation("seeds must be a non-empty list of non-negative integers")
        d["models"]["baselines"] = [canonical_algorithm(a) for a in d["models"]["baselines"]]
        for alg, hp in d["models"]["hyperparameters"].items():
            alg = canonical_algorithm(alg)
            unknown = set(hp) - set(DEFAULT_HYPERPARAMETERS[alg])
            if unknown:
                raise ContractViolation(f"models.hyperparameters.{alg}: unknown keys {sorted(unknown)}")
        at = d["attack"]
        at["methods"] = [str(m).lower() for m in at["methods"]]
        if set(at["methods"]) - {"gan", "fgsm"}:
            raise ContractViolation("attack.methods may contain only 'gan' and 'fgsm'")
        eps = [at["fgsm_eps"], *at["eps_sweep"]]
        if not all(isinstance(e, (int, float)) and e >= 0 for e in eps):
            raise ContractViolation("FGSM eps values must be non-negative numbers")
        df = d["defense"]
        if not isinstance(df["folds"], int) or df["folds"] < 2:
            raise ContractViolation("defense.folds must be an integer >= 2")
        if not 0.0 <= float(df["fraction"]) <= 1.0:
            raise ContractViolation("defense.fraction must lie in [0, 1]")
        if df["meta_mode"] not in ("proba", "label"):
            raise ContractViolation("defense.meta_mode must be 'proba' or 'label'")
        if not 0.0 < float(df["ae_validation_fraction"]) < 1.0:
            raise ContractViolation("defense.ae_validation_fraction must lie in (0, 1)")

    # -- accessors
    def __getitem__(self, key):
        return self.doc[key]

    @property
    def seeds(self) -> list[int]:
        return list(self.doc["seeds"])

    @property
    def out_dir(self) -> Path:
        return Path(self.doc["output"]["dir"])

    def canonical(self) -> str:
        # the output directory does not influence results, so it is not hashed
        doc = copy.deepcopy(self.doc)
        doc.pop("output")
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.doc)

    def dumps(self) -> str:
        return yaml.safe_dump(self.doc, sort_keys=True)
