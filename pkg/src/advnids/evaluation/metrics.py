"""Confusion matrices, per-class / macro metrics and a paired permutation test."""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ContractViolation
from ..numerics import RngStream

EXACT_LIMIT = 20
RESAMPLES = 100_000


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with malicious (label 1) as the positive class."""

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_labels(cls, preds, labels) -> "ConfusionMatrix":
        preds = np.asarray(preds).ravel()
        labels = np.asarray(labels).ravel()
        if preds.shape != labels.shape:
            raise ContractViolation(f"length mismatch: {preds.size} predictions, {labels.size} labels")
        if preds.size == 0:
            raise ContractViolation("cannot score an empty prediction vector")
        if not (np.all(np.isin(preds, (0, 1))) and np.all(np.isin(labels, (0, 1)))):
            raise ContractViolation("predictions and labels must be 0 or 1")
        p, y = preds.astype(bool), labels.astype(bool)
        return cls(
            tp=int(np.sum(p & y)),
            fp=int(np.sum(p & ~y)),
            tn=int(np.sum(~p & ~y)),
            fn=int(np.sum(~p & y)),
        )


def _ratio(num: int, den: int) -> tuple[float, bool]:
    if den == 0:
        return 0.0, True
    return 100.0 * num / den, False


def _f1(precision: float, recall: float) -> tuple[float, bool]:
    if precision + recall == 0:
        return 0.0, True
    return 2.0 * precision * recall / (precision + recall), False


@dataclass
class MetricSet:
    """All values are percentages. ``precision``/``recall``/``f1`` are macro
    averages over the benign and malicious classes."""

    precision: float
    recall: float
    f1: float
    accuracy: float
    detection_rate: float
    per_class: dict
    confusion: dict
    zero_division: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricSet":
        return cls(**doc)


def metrics_from_confusion(cm: ConfusionMatrix) -> MetricSet:
    flags = []
    per_class = {}
    # benign view swaps the roles of the two classes
    views = {
        "malicious": (cm.tp, cm.fp, cm.fn),
        "benign": (cm.tn, cm.fn, cm.fp),
    }
    for name, (tp, fp, fn) in views.items():
        prec, z1 = _ratio(tp, tp + fp)
        rec, z2 = _ratio(tp, tp + fn)
        f1, z3 = _f1(prec, rec)
        for flag, what in ((z1, "precision"), (z2, "recall"), (z3, "f1")):
            if flag:
                flags.append(f"{name}.{what}")
        per_class[name] = {"precision": prec, "recall": rec, "f1": f1, "support": tp + fn}
    acc, _ = _ratio(cm.tp + cm.tn, cm.total)
    return MetricSet(
        precision=(per_class["benign"]["precision"] + per_class["malicious"]["precision"]) / 2.0,
        recall=(per_class["benign"]["recall"] + per_class["malicious"]["recall"]) / 2.0,
        f1=(per_class["benign"]["f1"] + per_class["malicious"]["f1"]) / 2.0,
        accuracy=acc,
        detection_rate=per_class["malicious"]["recall"],
        per_class=per_class,
        confusion=asdict(cm),
        zero_division=flags,
    )


def compute_metrics(preds, labels) -> MetricSet:
    return metrics_from_confusion(ConfusionMatrix.from_labels(preds, labels))


def mean_metrics(sets: list[MetricSet]) -> dict:
    """Average the headline numbers over repeated runs."""
    keys = ("precision", "recall", "f1", "accuracy", "detection_rate")
    return {k: float(np.mean([getattr(s, k) for s in sets])) for k in keys}


def significance_test(a, b, rng: RngStream | None = None) -> float:
    """Two-sided paired permutation test on the mean difference.

    Exact (all sign flips) for up to 20 pairs, otherwise 100,000 random
    sign-flip resamples.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ContractViolation(f"paired arrays differ in length: {a.size} vs {b.size}")
    if a.size < 5:
        raise ContractViolation("permutation test needs at least five pairs")
    d = a - b
    observed = abs(d.mean())
    tol = 1e-12 * max(1.0, observed)
    if d.size <= EXACT_LIMIT:
        signs = np.array(list(itertools.product((1.0, -1.0), repeat=d.size)))
        stats = np.abs(signs @ d) / d.size
        return float(np.mean(stats >= observed - tol))
    rng = rng or RngStream(0)
    hits = 0
    for start in range(0, RESAMPLES, 10_000):
        k = min(10_000, RESAMPLES - start)
        signs = rng.choice((-1.0, 1.0), size=(k, d.size))
        hits += int(np.sum(np.abs(signs @ d) / d.size >= observed - tol))
    # the observed assignment counts toward the null distribution
    return float((hits + 1) / (RESAMPLES + 1))
