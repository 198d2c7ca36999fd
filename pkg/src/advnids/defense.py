"""Two-layer detector: a seven-learner stacking classifier with a logistic
meta-model, gated by a benign-trained autoencoder; plus adversarial-training
augmentation of the training set."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attacks import AdversarialBatch
from .dataio import LabeledDataset
from .errors import ContractViolation, SchemaError
from .models import (
    Autoencoder,
    ClassifierSpec,
    fit_arrays,
    model_from_dict,
    model_to_dict,
    predict,
    predict_proba,
    reconstruction_error,
)
from .numerics import RngStream, percentile

BASE_ORDER = ("RF", "DT", "Bagging", "KNN", "LDA", "GB", "MLP")
CALIBRATION_PERCENTILE = 0.95
LAYER1, LAYER2 = "layer1", "layer2"
BUNDLE_VERSION = 1


def stratified_folds(labels: np.ndarray, folds: int, rng: RngStream) -> np.ndarray:
    """Fold id per row; each class is dealt round-robin over a random order."""
    if folds < 2:
        raise ContractViolation("stacking needs at least two folds")
    fold_of = np.empty(labels.size, dtype=np.int64)
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        fold_of[idx] = np.arange(idx.size) % folds
    for k in range(folds):
        present = np.unique(labels[fold_of == k])
        if present.size < 2:
            raise ContractViolation(f"fold {k} does not contain both classes")
    return fold_of


@dataclass
class StackingModel:
    bases: dict  # algorithm -> fitted model, in BASE_ORDER
    meta: object
    fold_ids: np.ndarray
    meta_mode: str = "proba"
    oof_features: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_features(self) -> int:
        return next(iter(self.bases.values())).n_features

    def meta_features(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        fn = predict_proba if self.meta_mode == "proba" else predict
        return np.column_stack([np.asarray(fn(self.bases[a], x), dtype=np.float64) for a in BASE_ORDER])

    def predict_proba(self, x) -> np.ndarray:
        return predict_proba(self.meta, self.meta_features(x))

    def predict(self, x) -> np.ndarray:
        return predict(self.meta, self.meta_features(x))

    def to_dict(self, pipeline_checksum: str = "") -> dict:
        return {
            "base_order": list(BASE_ORDER),
            "meta_mode": self.meta_mode,
            "fold_ids": self.fold_ids.tolist(),
            "bases": {a: model_to_dict(self.bases[a], pipeline_checksum) for a in BASE_ORDER},
            "meta": model_to_dict(self.meta, pipeline_checksum),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "StackingModel":
        if tuple(doc["base_order"]) != BASE_ORDER:
            raise SchemaError("stacking bundle has an unexpected base ordering")
        return cls(
            bases={a: model_from_dict(doc["bases"][a]) for a in BASE_ORDER},
            meta=model_from_dict(doc["meta"]),
            fold_ids=np.asarray(doc["fold_ids"], dtype=np.int64),
            meta_mode=doc.get("meta_mode", "proba"),
        )


def train_stacking(
    data: LabeledDataset,
    folds: int,
    rng: RngStream,
    base_specs: dict | None = None,
    meta_mode: str = "proba",
) -> StackingModel:
    """Out-of-fold stacking: meta-features for row ``i`` come from base models
    that never saw row ``i``; the bases used at inference are refit on all rows."""
    if meta_mode not in ("proba", "label"):
        raise ContractViolation("meta_mode must be 'proba' or 'label'")
    base_specs = base_specs or {}
    specs = {a: ClassifierSpec(a, base_specs.get(a, {})) for a in BASE_ORDER}
    x, y = data.features, data.labels
    fold_ids = stratified_folds(y, folds, rng.child(0))
    oof = np.zeros((x.shape[0], len(BASE_ORDER)))
    for k in range(folds):
        tr, te = fold_ids != k, fold_ids == k
        for j, a in enumerate(BASE_ORDER):
            m = fit_arrays(specs[a], x[tr], y[tr], rng.child(1).child(k).child(j))
            oof[te, j] = predict_proba(m, x[te]) if meta_mode == "proba" else predict(m, x[te])
    bases = {a: fit_arrays(specs[a], x, y, rng.child(2).child(j)) for j, a in enumerate(BASE_ORDER)}
    meta = fit_arrays(ClassifierSpec("LR"), oof, y, rng.child(3))
    return StackingModel(bases=bases, meta=meta, fold_ids=fold_ids, meta_mode=meta_mode, oof_features=oof)


def calibrate_threshold(ae: Autoencoder, benign_validation: LabeledDataset) -> float:
    """beta = 95th percentile of reconstruction errors on benign validation rows."""
    if len(benign_validation) == 0:
        raise ContractViolation("calibration set is empty")
    if np.any(benign_validation.labels != 0):
        raise ContractViolation("calibration set must contain only benign rows")
    errs = reconstruction_error(ae, benign_validation.features)
    return percentile(errs, CALIBRATION_PERCENTILE)


@dataclass
class TwoLayerDetector:
    stacking: StackingModel
    ae: Autoencoder | None
    pipeline_checksum: str = ""

    def __post_init__(self):
        if self.ae is not None and self.ae.threshold is None:
            raise ContractViolation("autoencoder threshold must be calibrated first")

    @property
    def threshold(self) -> float | None:
        return None if self.ae is None else float(self.ae.threshold)

    def classify(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Labels and deciding stage per row.

        Stacking-malicious rows stop at layer 1; the rest are malicious only
        if their reconstruction error is strictly above beta.
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        first = self.stacking.predict(x)
        labels = first.copy()
        stages = np.where(first == 1, LAYER1, LAYER2).astype(object)
        if self.ae is not None:
            rest = np.flatnonzero(first == 0)
            if rest.size:
                errs = reconstruction_error(self.ae, x[rest])
                labels[rest] = (errs > self.ae.threshold).astype(np.int64)
        return labels, stages

    def predict(self, x) -> np.ndarray:
        return self.classify(x)[0]


def two_layer_classify(det: TwoLayerDetector, x) -> tuple[int, str]:
    labels, stages = det.classify(x)
    return int(labels[0]), str(stages[0])


def build_detector(
    stacking: StackingModel,
    ae: Autoencoder | None,
    benign_validation: LabeledDataset | None = None,
    pipeline_checksum: str = "",
) -> TwoLayerDetector:
    if ae is not None and benign_validation is not None:
        ae.threshold = calibrate_threshold(ae, benign_validation)
    return TwoLayerDetector(stacking, ae, pipeline_checksum)


@dataclass
class AugmentedTrainSet:
    features: np.ndarray
    labels: np.ndarray
    provenance: np.ndarray  # "original", "GAN" or "FGSM" per row
    original_index: np.ndarray  # source row in the original set, -1 for added rows
    fraction: float
    appended: dict

    def to_dataset(self, like: LabeledDataset) -> LabeledDataset:
        return like.with_rows(self.features, self.labels)


def adversarial_augment(
    train: LabeledDataset,
    batches: list[AdversarialBatch],
    fraction: float,
    rng: RngStream,
) -> AugmentedTrainSet:
    """Append ``ceil(fraction * n_malicious)`` adversarial rows per attack type,
    then shuffle. Original rows are kept unchanged."""
    if not 0.0 <= fraction <= 1.0:
        raise ContractViolation(f"fraction must lie in [0, 1], got {fraction}")
    for b in batches:
        if b.features.shape[1] != train.n_features:
            raise ContractViolation("adversarial batch feature dimension differs from training data")
    n_mal = int(np.sum(train.labels == 1))
    want = math.ceil(fraction * n_mal)
    feats = [train.features]
    labels = [train.labels]
    prov = [np.full(len(train), "original", dtype=object)]
    orig = [np.arange(len(train))]
    appended = {}
    for j, kind in enumerate(sorted({b.provenance for b in batches})):
        pool = np.vstack([b.features for b in batches if b.provenance == kind])
        if want == 0 or pool.shape[0] == 0:
            appended[kind] = 0
            continue
        pick = rng.child(j).choice(pool.shape[0], size=want, replace=want > pool.shape[0])
        feats.append(pool[pick])
        labels.append(np.ones(want, dtype=np.int64))
        prov.append(np.full(want, kind, dtype=object))
        orig.append(np.full(want, -1))
        appended[kind] = want
    x = np.vstack(feats)
    order = rng.child(99).permutation(x.shape[0])
    return AugmentedTrainSet(
        features=x[order],
        labels=np.concatenate(labels)[order],
        provenance=np.concatenate(prov)[order],
        original_index=np.concatenate(orig)[order],
        fraction=float(fraction),
        appended=appended,
    )


def save_detector(det: TwoLayerDetector, outdir, manifest: dict | None = None) -> Path:
    """Persist as a directory: base models, meta model, autoencoder, folds, manifest."""
    outdir = Path(outdir)
    (outdir / "bases").mkdir(parents=True, exist_ok=True)
    doc = det.stacking.to_dict(det.pipeline_checksum)
    for a in BASE_ORDER:
        (outdir / "bases" / f"{a}.json").write_text(json.dumps(doc["bases"][a]))
    (outdir / "meta.json").write_text(json.dumps(doc["meta"]))
    (outdir / "folds.json").write_text(json.dumps({"fold_ids": doc["fold_ids"]}))
    if det.ae is not None:
        (outdir / "autoencoder.json").write_text(json.dumps(det.ae.to_dict()))
    info = {
        "version": BUNDLE_VERSION,
        "base_order": list(BASE_ORDER),
        "meta_mode": det.stacking.meta_mode,
        "threshold": det.threshold,
        "pipeline_checksum": det.pipeline_checksum,
        **(manifest or {}),
    }
    (outdir / "manifest.json").write_text(json.dumps(info, indent=1, sort_keys=True))
    return outdir


def load_detector(indir) -> TwoLayerDetector:
    indir = Path(indir)
    info = json.loads((indir / "manifest.json").read_text())
    if info.get("version") != BUNDLE_VERSION:
        raise SchemaError(f"unsupported detector bundle version {info.get('version')}")
    doc = {
        "base_order": info["base_order"],
        "meta_mode": info["meta_mode"],
        "fold_ids": json.loads((indir / "folds.json").read_text())["fold_ids"],
        "bases": {a: json.loads((indir / "bases" / f"{a}.json").read_text()) for a in info["base_order"]},
        "meta": json.loads((indir / "meta.json").read_text()),
    }
    ae_path = indir / "autoencoder.json"
    ae = Autoencoder.from_dict(json.loads(ae_path.read_text())) if ae_path.exists() else None
    return TwoLayerDetector(StackingModel.from_dict(doc), ae, info.get("pipeline_checksum", ""))
