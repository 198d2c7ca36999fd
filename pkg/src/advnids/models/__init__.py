"""Uniform train / predict / persist interface over every learner."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ContractViolation, SchemaError
from ..numerics import RngStream
from .linear import KNeighborsClassifier, LinearDiscriminantAnalysis, LogisticRegression
from .mlp import MlpNetwork
from .neural import Autoencoder, MLPClassifier, reconstruction_error, train_autoencoder
from .trees import (
    BaggingClassifier,
    DecisionTreeClassifier,
    GradientBoostingClassifier,
    RandomForestClassifier,
)

__all__ = [
    "ALGORITHMS",
    "DEFAULT_HYPERPARAMETERS",
    "Autoencoder",
    "ClassifierSpec",
    "fit_arrays",
    "MlpNetwork",
    "load_model",
    "mlp_input_gradient",
    "model_from_dict",
    "model_to_dict",
    "predict",
    "predict_proba",
    "reconstruction_error",
    "save_model",
    "train_autoencoder",
    "train_classifier",
]

MODEL_FORMAT = "advnids.model"
MODEL_VERSION = 1
THRESHOLD = 0.5

_CLASSES = {
    "DT": DecisionTreeClassifier,
    "RF": RandomForestClassifier,
    "Bagging": BaggingClassifier,
    "GB": GradientBoostingClassifier,
    "KNN": KNeighborsClassifier,
    "LDA": LinearDiscriminantAnalysis,
    "LR": LogisticRegression,
    "MLP": MLPClassifier,
}
ALGORITHMS = tuple(_CLASSES)
_ALIASES = {"BGG": "Bagging", "BAGGING": "Bagging"}

DEFAULT_HYPERPARAMETERS: dict[str, dict] = {
    "DT": {"max_depth": 12, "min_samples_leaf": 1, "max_features": None},
    "RF": {"n_trees": 100, "max_depth": 12, "max_features": "sqrt", "bootstrap": True},
    "Bagging": {"n_trees": 10, "max_depth": 12, "max_features": None, "bootstrap": True},
    "GB": {"n_estimators": 100, "learning_rate": 0.1, "max_depth": 1},
    "KNN": {"k": 5},
    "LDA": {"shrinkage": 1e-6},
    "LR": {"l2": 1e-4, "epochs": 300},
    "MLP": {"hidden": [64, 64], "lr": 0.05, "epochs": 50, "batch_size": 128, "l2": 0.0},
}


def canonical_algorithm(name: str) -> str:
    name = str(name)
    if name in _CLASSES:
        return name
    upper = name.upper()
    if upper in _ALIASES:
        return _ALIASES[upper]
    for key in _CLASSES:
        if key.upper() == upper:
            return key
    raise ContractViolation(f"unknown algorithm {name!r}; choose from {list(_CLASSES)}")


@dataclass
class ClassifierSpec:
    algorithm: str
    hyperparameters: dict = field(default_factory=dict)

    def __post_init__(self):
        self.algorithm = canonical_algorithm(self.algorithm)
        unknown = set(self.hyperparameters) - set(DEFAULT_HYPERPARAMETERS[self.algorithm])
        if unknown:
            raise ContractViolation(f"{self.algorithm}: unknown hyperparameters {sorted(unknown)}")
        for key, val in self.resolved().items():
            if isinstance(val, (int, float)) and not isinstance(val, bool) and val < 0:
                raise ContractViolation(f"{self.algorithm}.{key} must be non-negative")

    def resolved(self) -> dict:
        return {**DEFAULT_HYPERPARAMETERS[self.algorithm], **self.hyperparameters}

    def build(self):
        return _CLASSES[self.algorithm](**self.resolved())


def fit_arrays(spec: ClassifierSpec, x: np.ndarray, y: np.ndarray, rng: RngStream):
    """Fit on raw arrays; :func:`train_classifier` is the dataset-level entry point."""
    if x.shape[0] == 0:
        raise ContractViolation("training data is empty")
    if np.unique(y).size < 2 and spec.algorithm not in ("KNN", "LDA"):
        raise ContractViolation(f"{spec.algorithm} needs both classes present")
    model = spec.build()
    model.fit(x, y, rng)
    model.spec = spec
    model.n_features = x.shape[1]
    return model


def train_classifier(spec: ClassifierSpec, data, rng: RngStream):
    """Fit the learner described by ``spec`` on a LabeledDataset."""
    return fit_arrays(spec, data.features, data.labels, rng)


def predict_proba(model, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != model.n_features:
        raise ContractViolation(f"model expects {model.n_features} features, got {x2.shape[1]}")
    p = np.clip(np.asarray(model.predict_proba(x2), dtype=np.float64), 0.0, 1.0)
    return float(p[0]) if single else p


def predict(model, x):
    """Hard labels; a probability of exactly 0.5 counts as malicious."""
    p = predict_proba(model, x)
    if isinstance(p, float):
        return int(p >= THRESHOLD)
    return (p >= THRESHOLD).astype(np.int64)


def mlp_input_gradient(net, x, y) -> np.ndarray:
    """Exact gradient of the BCE loss w.r.t. the input, via backprop."""
    if isinstance(net, MLPClassifier):
        net = net.net
    x = np.asarray(x, dtype=np.float64)
    g = net.input_gradient(x, y)
    return g[0] if x.ndim == 1 else g


def model_to_dict(model, pipeline_checksum: str = "") -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "algorithm": model.spec.algorithm,
        "hyperparameters": model.spec.hyperparameters,
        "n_features": model.n_features,
        "pipeline_checksum": pipeline_checksum,
        "params": model.params(),
    }


def model_from_dict(doc: dict, expected_pipeline: str | None = None):
    if doc.get("format") != MODEL_FORMAT:
        raise SchemaError("not a model document")
    if doc.get("version") != MODEL_VERSION:
        raise SchemaError(f"unsupported model version {doc.get('version')}")
    if expected_pipeline is not None and doc.get("pipeline_checksum") != expected_pipeline:
        raise SchemaError("model was trained against a different fitted pipeline")
    spec = ClassifierSpec(doc["algorithm"], doc.get("hyperparameters", {}))
    model = spec.build()
    model.load_params(doc["params"])
    model.spec = spec
    model.n_features = int(doc["n_features"])
    return model


def save_model(model, path, pipeline_checksum: str = "") -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, pipeline_checksum)))


def load_model(path, expected_pipeline: str | None = None):
    return model_from_dict(json.loads(Path(path).read_text()), expected_pipeline)
