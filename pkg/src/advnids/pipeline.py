"""Persisted pipeline stages keyed by config hash.

Layout under ``<out>/<config-hash>/``::

    prepare/  pipeline.json, {train,test}_{features,labels}.npy
    train/    seed-<s>/<algorithm>.json
    attack/   seed-<s>/{gan.json, <split>_<attack>.csv, sweep_eps-<e>.csv}
    defend/   seed-<s>/{sc, sc_at, cross-<attack>}/ detector bundles
    eval/     report.json
    ablate/   report.json
    report/   tables/, figures/, manifest.json

Every stage directory carries ``manifest.json`` with file checksums and the
checksums of the upstream manifests it was built from.  Stage directories
are assembled in a temporary sibling and renamed into place.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import AdversarialBatch, GanState, load_batch, save_batch
from .config import RunConfig
from .dataio import LabeledDataset
from .defense import TwoLayerDetector, load_detector, save_detector
from .errors import StaleArtifactError
from .evaluation.harness import EvalReport, assemble_report, evaluate_seed, prepared_metadata
from .evaluation.render import render_report
from .experiment import (
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
from .models import load_model, save_model
from .preprocess import FittedPipeline

log = logging.getLogger(__name__)

STAGES = ("prepare", "train", "attack", "defend", "eval", "ablate", "report")
UPSTREAM = {
    "prepare": (),
    "train": ("prepare",),
    "attack": ("prepare", "train"),
    "defend": ("prepare", "train", "attack"),
    "eval": ("prepare", "train", "attack", "defend"),
    "ablate": ("prepare", "train", "attack", "defend"),
    "report": ("eval",),
}


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Workspace:
    """Artifact directory for one config."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.root = cfg.out_dir / cfg.hash()

    def stage_dir(self, stage: str) -> Path:
        return self.root / stage

    def manifest_path(self, stage: str) -> Path:
        return self.stage_dir(stage) / "manifest.json"

    def manifest(self, stage: str) -> dict | None:
        p = self.manifest_path(stage)
        return json.loads(p.read_text()) if p.exists() else None

    # ---------------------------------------------------------------- checks
    def require(self, stage: str) -> dict:
        """Manifest of an upstream stage after verifying it is present and current."""
        man = self.manifest(stage)
        if man is None:
            raise StaleArtifactError(
                f"no {stage} artifacts under {self.root}; run `advnids {stage}` first", stage)
        base = self.stage_dir(stage)
        for rel, digest in man["files"].items():
            p = base / rel
            if not p.exists() or sha256_file(p) != digest:
                raise StaleArtifactError(f"{stage} artifact {rel} is missing or modified; rerun `advnids {stage}`",
                                         stage)
        for up, digest in man["upstream"].items():
            mp = self.manifest_path(up)
            if not mp.exists() or sha256_file(mp) != digest:
                raise StaleArtifactError(
                    f"{stage} artifacts were built from an older {up} stage; rerun `advnids {stage}`", stage)
        return man

    def upstream_digests(self, stage: str) -> dict:
        for up in UPSTREAM[stage]:
            self.require(up)
        return {up: sha256_file(self.manifest_path(up)) for up in UPSTREAM[stage]}

    # ---------------------------------------------------------------- writes
    def commit(self, stage: str, tmp: Path, upstream: dict, extra: dict | None = None) -> dict:
        """Write the manifest into ``tmp`` and atomically move it to the stage directory."""
        files = {
            p.relative_to(tmp).as_posix(): sha256_file(p)
            for p in sorted(tmp.rglob("*")) if p.is_file()
        }
        manifest = {
            "stage": stage,
            "config_hash": self.cfg.hash(),
            "seeds": self.cfg.seeds,
            "library_version": __version__,
            "upstream": upstream,
            "files": files,
            **(extra or {}),
        }
        (tmp / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        final = self.stage_dir(stage)
        if final.exists():
            trash = final.with_name(f".{stage}.old-{os.getpid()}")
            final.rename(trash)
            tmp.rename(final)
            shutil.rmtree(trash)
        else:
            tmp.rename(final)
        return manifest

    def scratch(self, stage: str) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "config.yaml").write_text(self.cfg.dumps())
        tmp = self.root / f".{stage}.tmp-{os.getpid()}"
        if tmp.exists():
            shutil.rmtree(tmp)
        tmp.mkdir()
        return tmp


# ------------------------------------------------------------------ prepare

def _data_root(cfg: RunConfig) -> Path:
    return cfg.out_dir / "data"


def stage_prepare(ws: Workspace) -> tuple[dict, bool]:
    """Returns ``(manifest, skipped)``; unchanged inputs skip all work."""
    cfg = ws.cfg
    prepared = prepare_data(cfg, _data_root(cfg))
    inputs = {
        "sources": prepared.sources,
        "schema_sha256": prepared.train.schema.checksum(),
    }
    old = ws.manifest("prepare")
    if old is not None and old.get("inputs") == inputs:
        try:
            ws.require("prepare")
            return old, True
        except StaleArtifactError:
            pass
    tmp = ws.scratch("prepare")
    prepared.pipe.save(tmp / "pipeline.json")
    for role, data in (("train", prepared.train), ("test", prepared.test)):
        np.save(tmp / f"{role}_features.npy", data.features)
        np.save(tmp / f"{role}_labels.npy", data.labels)
    extra = {
        "inputs": inputs,
        "split": prepared.split,
        "rows": {"train": len(prepared.train), "test": len(prepared.test)},
        "pipeline_checksum": prepared.pipe.checksum(),
    }
    return ws.commit("prepare", tmp, {}, extra), False


def load_prepared(ws: Workspace) -> PreparedData:
    man = ws.require("prepare")
    base = ws.stage_dir("prepare")
    pipe = FittedPipeline.load(base / "pipeline.json")
    sets = {}
    for role in ("train", "test"):
        sets[role] = LabeledDataset(
            np.load(base / f"{role}_features.npy"), np.load(base / f"{role}_labels.npy"), pipe.schema)
    return PreparedData(pipe, sets["train"], sets["test"], man["split"], man["inputs"]["sources"])


# -------------------------------------------------------------------- train

def stage_train(ws: Workspace) -> dict:
    upstream = ws.upstream_digests("train")
    prepared = load_prepared(ws)
    tmp = ws.scratch("train")
    for seed in ws.cfg.seeds:
        train, _ = subsample(ws.cfg, prepared, seed)
        models = train_baselines(ws.cfg, train, seed)
        d = tmp / f"seed-{seed}"
        d.mkdir()
        for alg, m in models.items():
            save_model(m, d / f"{alg}.json", prepared.pipe.checksum())
    return ws.commit("train", tmp, upstream)


def load_models(ws: Workspace, seed: int, pipeline_checksum: str) -> dict:
    ws.require("train")
    d = ws.stage_dir("train") / f"seed-{seed}"
    return {p.stem: load_model(p, pipeline_checksum) for p in sorted(d.glob("*.json"))}


# ------------------------------------------------------------------- attack

def stage_attack(ws: Workspace) -> dict:
    upstream = ws.upstream_digests("attack")
    prepared = load_prepared(ws)
    tmp = ws.scratch("attack")
    for seed in ws.cfg.seeds:
        train, test = subsample(ws.cfg, prepared, seed)
        models = load_models(ws, seed, prepared.pipe.checksum())
        res = run_attacks(ws.cfg, models, train, test, prepared.pipe, seed)
        d = tmp / f"seed-{seed}"
        d.mkdir()
        if res.gan is not None:
            (d / "gan.json").write_text(json.dumps(res.gan.to_dict()))
        for split, batches in (("train", res.train_batches), ("test", res.test_batches)):
            for kind, b in batches.items():
                save_batch(b, d / f"{split}_{kind}.csv", prepared.pipe.checksum())
        for eps, b in res.sweep.items():
            save_batch(b, d / f"sweep_eps-{eps:g}.csv", prepared.pipe.checksum())
    return ws.commit("attack", tmp, upstream)


def load_attack(ws: Workspace, seed: int) -> AttackResult:
    ws.require("attack")
    d = ws.stage_dir("attack") / f"seed-{seed}"
    gan = GanState.from_dict(json.loads((d / "gan.json").read_text())) if (d / "gan.json").exists() else None
    batches: dict[str, dict[str, AdversarialBatch]] = {"train": {}, "test": {}}
    for split in batches:
        for p in sorted(d.glob(f"{split}_*.csv")):
            batches[split][p.stem.split("_", 1)[1]] = load_batch(p)
    sweep = {float(p.stem.split("-", 1)[1]): load_batch(p) for p in sorted(d.glob("sweep_eps-*.csv"))}
    return AttackResult(gan, batches["train"], batches["test"], sweep)


# ------------------------------------------------------------------- defend

def stage_defend(ws: Workspace) -> dict:
    upstream = ws.upstream_digests("defend")
    prepared = load_prepared(ws)
    pcs = prepared.pipe.checksum()
    tmp = ws.scratch("defend")
    for seed in ws.cfg.seeds:
        train, _ = subsample(ws.cfg, prepared, seed)
        models = load_models(ws, seed, pcs)
        res = run_defense(ws.cfg, models, train, load_attack(ws, seed), seed)
        d = tmp / f"seed-{seed}"
        info = {"seed": seed, "ae_validation_fraction": ws.cfg["defense"]["ae_validation_fraction"]}
        save_detector(TwoLayerDetector(res.sc, res.ae, pcs), d / "sc", info)
        if res.sc_at is not None:
            save_detector(TwoLayerDetector(res.sc_at, res.ae_at, pcs), d / "sc_at", info)
        for kind, stack in res.cross.items():
            save_detector(TwoLayerDetector(stack, res.ae, pcs), d / f"cross-{kind}", info)
    return ws.commit("defend", tmp, upstream)


def load_defense(ws: Workspace, seed: int) -> DefenseResult:
    ws.require("defend")
    d = ws.stage_dir("defend") / f"seed-{seed}"
    sc = load_detector(d / "sc")
    sc_at = load_detector(d / "sc_at") if (d / "sc_at").exists() else None
    cross = {p.name.split("-", 1)[1]: load_detector(p).stacking for p in sorted(d.glob("cross-*"))}
    return DefenseResult(
        ae=sc.ae,
        sc=sc.stacking,
        sc_at=None if sc_at is None else sc_at.stacking,
        ae_at=sc.ae if sc_at is None else sc_at.ae,
        cross=cross,
    )


# ------------------------------------------------------------- eval / ablate

def _evaluate(ws: Workspace, stage: str) -> EvalReport:
    upstream = ws.upstream_digests(stage)
    prepared = load_prepared(ws)
    outcomes = []
    sizes = (0, 0)
    variants = ABLATION_VARIANTS if stage == "ablate" else ()
    for seed in ws.cfg.seeds:
        train, test = subsample(ws.cfg, prepared, seed)
        sizes = (len(train), len(test))
        models = load_models(ws, seed, prepared.pipe.checksum())
        attack = load_attack(ws, seed)
        defense = load_defense(ws, seed)
        if variants and defense.sc_at is None:
            raise StaleArtifactError("ablation needs adversarial training; configure attack.methods", "attack")
        for x, _ in condition_sets(test, attack.test_batches).values():
            check_superset(defense, x)
        outcomes.append(evaluate_seed(ws.cfg, test, models, attack, defense, variants))
    names = list(variants) if variants else [*ws.cfg["models"]["baselines"], OURS]
    kind = "ablation" if variants else "experiment"
    report = assemble_report(ws.cfg, prepared_metadata(prepared, *sizes), outcomes, kind, names)
    tmp = ws.scratch(stage)
    (tmp / "report.json").write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
    ws.commit(stage, tmp, upstream)
    return report


def stage_eval(ws: Workspace) -> EvalReport:
    return _evaluate(ws, "eval")


def stage_ablate(ws: Workspace) -> EvalReport:
    return _evaluate(ws, "ablate")


def load_report(ws: Workspace, stage: str) -> EvalReport:
    ws.require(stage)
    return EvalReport.from_dict(json.loads((ws.stage_dir(stage) / "report.json").read_text()))


# ------------------------------------------------------------------- report

def stage_report(ws: Workspace) -> dict:
    upstream = ws.upstream_digests("report")
    experiment = load_report(ws, "eval")
    ablation = None
    if ws.manifest("ablate") is not None:
        ablation = load_report(ws, "ablate")
        upstream["ablate"] = sha256_file(ws.manifest_path("ablate"))
    tmp = ws.scratch("report")
    render_report(experiment, tmp, ablation)
    # render_report writes its own manifest; the stage manifest replaces it
    # with one that also records upstream checksums
    (tmp / "manifest.json").unlink()
    return ws.commit("report", tmp, upstream, {
        "dataset_checksums": {k: v["sha256"] for k, v in experiment.metadata["sources"].items()},
    })


RUNNERS = {
    "prepare": lambda ws: stage_prepare(ws)[0],
    "train": stage_train,
    "attack": stage_attack,
    "defend": stage_defend,
    "eval": stage_eval,
    "ablate": stage_ablate,
    "report": stage_report,
}


def run_stage(cfg: RunConfig, stage: str):
    return RUNNERS[stage](Workspace(cfg))


def run_pipeline(cfg: RunConfig, stages=STAGES) -> Workspace:
    ws = Workspace(cfg)
    for stage in stages:
        RUNNERS[stage](ws)
    return ws
