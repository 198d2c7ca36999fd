"""Four-condition experiment harness and the ablation protocol."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..config import RunConfig
from ..experiment import (
    ABLATION_VARIANTS,
    OURS,
    AttackResult,
    DefenseResult,
    PreparedData,
    check_superset,
    condition_sets,
    prepare_data,
    run_attacks,
    run_defense,
    subsample,
    train_baselines,
)
from ..defense import TwoLayerDetector
from ..errors import ContractViolation
from ..models import predict
from .metrics import compute_metrics

log = logging.getLogger(__name__)

CONDITION_ORDER = ("unmodified", "GAN", "FGSM", "all")
HEADLINE = ("precision", "recall", "f1", "accuracy", "detection_rate")


@dataclass
class EvalReport:
    """``cells[model][condition]`` holds ``{"mean": {...}, "per_seed": [MetricSet dicts]}``."""

    kind: str  # "experiment" or "ablation"
    models: list
    conditions: list
    cells: dict
    metadata: dict
    fgsm_sweep: dict = field(default_factory=dict)
    cross_test: dict = field(default_factory=dict)
    gan: dict = field(default_factory=dict)

    def per_seed(self, model: str, condition: str, metric: str) -> list[float]:
        return [m[metric] for m in self.cells[model][condition]["per_seed"]]

    def mean(self, model: str, condition: str, metric: str) -> float:
        return self.cells[model][condition]["mean"][metric]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "models": list(self.models),
            "conditions": list(self.conditions),
            "cells": self.cells,
            "metadata": self.metadata,
            "fgsm_sweep": self.fgsm_sweep,
            "cross_test": self.cross_test,
            "gan": self.gan,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        return cls(**doc)


@dataclass
class SeedOutcome:
    metrics: dict  # model -> condition -> MetricSet dict
    sweep: list  # FGSM target accuracy per eps
    cross: dict
    gan: dict


def evaluate_seed(
    cfg: RunConfig,
    test,
    models: dict,
    attack: AttackResult,
    defense: DefenseResult,
    variants=(),
) -> SeedOutcome:
    """Score baselines and the full detector (or the given ablation variants)
    on every available condition for one seed."""
    sets = condition_sets(test, attack.test_batches)
    scorers = {}
    if variants:
        for v in variants:
            scorers[v] = defense.detector(v).predict
    else:
        for alg in cfg["models"]["baselines"]:
            scorers[alg] = (lambda m: (lambda x: predict(m, x)))(models[alg])
        scorers[OURS] = defense.detector("SC+AT+AE" if defense.sc_at is not None else "SC+AE").predict
    metrics = {}
    for name, fn in scorers.items():
        metrics[name] = {cond: compute_metrics(fn(x), y).to_dict() for cond, (x, y) in sets.items()}
    sweep = []
    if "MLP" in models:
        for eps in sorted(attack.sweep):
            preds = predict(models["MLP"], attack.sweep[eps].features)
            sweep.append(100.0 * float(np.mean(preds == 1)))
    cross = {}
    for trained_on, stack in sorted(defense.cross.items()):
        other = "FGSM" if trained_on == "GAN" else "GAN"
        det = TwoLayerDetector(stack, defense.ae)
        x, y = sets[other]
        cross[f"{trained_on}->{other}"] = compute_metrics(det.predict(x), y).to_dict()
    gan = {}
    if attack.gan is not None and attack.gan.history:
        gan = {
            "initial_evasion_rate": attack.gan.history[0]["evasion_rate"],
            "final_evasion_rate": attack.gan.history[-1]["evasion_rate"],
        }
    return SeedOutcome(metrics, sweep, cross, gan)


def _mean_dict(dicts: list[dict]) -> dict:
    return {k: float(np.mean([d[k] for d in dicts])) for k in HEADLINE}


def assemble_report(
    cfg: RunConfig, prepared_meta: dict, outcomes: list[SeedOutcome], kind: str, models: list[str],
) -> EvalReport:
    conditions = [c for c in CONDITION_ORDER if c in outcomes[0].metrics[models[0]]] if models else []
    cells = {
        m: {
            c: {
                "mean": _mean_dict([o.metrics[m][c] for o in outcomes]),
                "per_seed": [o.metrics[m][c] for o in outcomes],
            }
            for c in conditions
        }
        for m in models
    }
    eps = sorted(float(e) for e in cfg["attack"]["eps_sweep"]) if outcomes[0].sweep else []
    sweep = {}
    if eps:
        per = [o.sweep for o in outcomes]
        sweep = {"eps": eps, "per_seed": per, "mean": [float(v) for v in np.mean(per, axis=0)]}
    cross = {}
    if outcomes[0].cross:
        for key in outcomes[0].cross:
            per = [o.cross[key] for o in outcomes]
            cross[key] = {"mean": _mean_dict(per), "per_seed": per}
    gan = {}
    if outcomes[0].gan:
        gan = {k: [o.gan[k] for o in outcomes] for k in outcomes[0].gan}
    metadata = {
        "config_hash": cfg.hash(),
        "config": json.loads(cfg.canonical()),
        "dataset": cfg["dataset"]["name"],
        "seeds": cfg.seeds,
        "subsample": dict(cfg["subsample"]),
        "fgsm_eps": float(cfg["attack"]["fgsm_eps"]),
        "eps_sweep": eps,
        "library_version": __version__,
        "scaling": "statistics fitted on training rows only",
        **prepared_meta,
    }
    return EvalReport(kind, list(models), conditions, cells, metadata, sweep, cross, gan)


def prepared_metadata(prepared: PreparedData, train_rows: int, test_rows: int) -> dict:
    return {
        "split": prepared.split,
        "sources": prepared.sources,
        "pipeline_checksum": prepared.pipe.checksum(),
        "rows": {"train": train_rows, "test": test_rows},
    }


def run_all(cfg: RunConfig, data_root=None, on_seed=None) -> tuple[EvalReport, EvalReport]:
    """Experiment and ablation reports from one shared set of trained artifacts.

    ``on_seed(seed, test, attack, defense)``, if given, is called after each
    seed's defense is trained.
    """
    data_root = Path(data_root) if data_root is not None else cfg.out_dir / "data"
    prepared = prepare_data(cfg, data_root)
    exp, abl = [], []
    sizes = (0, 0)
    for seed in cfg.seeds:
        train, test = subsample(cfg, prepared, seed)
        sizes = (len(train), len(test))
        models = train_baselines(cfg, train, seed)
        attack = run_attacks(cfg, models, train, test, prepared.pipe, seed)
        defense = run_defense(cfg, models, train, attack, seed)
        for x, _ in condition_sets(test, attack.test_batches).values():
            check_superset(defense, x)
        if on_seed is not None:
            on_seed(seed, test, attack, defense)
        exp.append(evaluate_seed(cfg, test, models, attack, defense))
        if defense.sc_at is not None:
            abl.append(evaluate_seed(cfg, test, models, attack, defense, ABLATION_VARIANTS))
        log.info("seed %d done", seed)
    meta = prepared_metadata(prepared, *sizes)
    experiment = assemble_report(cfg, meta, exp, "experiment", [*cfg["models"]["baselines"], OURS])
    ablation = assemble_report(cfg, meta, abl, "ablation", list(ABLATION_VARIANTS)) if abl else None
    return experiment, ablation


def run_experiment(cfg: RunConfig, data_root=None) -> EvalReport:
    """Baselines plus the full detector under every attack condition, over all seeds."""
    return run_all(cfg, data_root)[0]


def run_ablation(cfg: RunConfig, data_root=None) -> EvalReport:
    """SC, SC+AE, SC+AT and SC+AT+AE; the headline number is DR on ``all``."""
    report = run_all(cfg, data_root)[1]
    if report is None:
        raise ContractViolation("ablation needs at least one attack method configured")
    return report
