"""In-memory stage functions shared by the experiment harness and the CLI.

Each stage takes the run config plus upstream results and returns plain
dataclasses; persistence lives in :mod:`advnids.pipeline`.  Every seeded
stage draws from its own child of ``RngStream(seed)``:

    0 subsampling, 1 baseline training, 2 attacks, 3 defense
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import preprocess
from .attacks import (
    GanState,
    VotingEnsemble,
    fgsm_batch,
    generate_adversarial,
    train_gan,
)
from .config import RunConfig
from .dataio import LabeledDataset, load_dataset, load_schema, stratified_subsample
from .defense import (
    StackingModel,
    TwoLayerDetector,
    adversarial_augment,
    calibrate_threshold,
    train_stacking,
)
from .errors import ContractViolation, InvariantViolation
from .models import Autoencoder, ClassifierSpec, train_classifier, train_autoencoder
from .numerics import RngStream
from .preprocess import FittedPipeline
from .synthetic import write_dataset

log = logging.getLogger(__name__)

# models needed by the attacks even when not listed as baselines
ATTACK_SUPPORT = ("KNN", "LDA", "LR", "MLP")
ABLATION_VARIANTS = ("SC", "SC+AE", "SC+AT", "SC+AT+AE")
OURS = "Ours"


# ----------------------------------------------------------------- prepare

@dataclass
class PreparedData:
    pipe: FittedPipeline
    train: LabeledDataset
    test: LabeledDataset
    split: str
    sources: dict  # role -> {"path", "sha256", "rows"}


def resolve_paths(cfg: RunConfig, data_root: Path) -> tuple[Path, Path | None]:
    ds = cfg["dataset"]
    if ds["train_path"] is not None:
        train = Path(ds["train_path"])
        test = Path(ds["test_path"]) if ds["test_path"] is not None else None
        if ds["split"] == "official" and test is None:
            raise ContractViolation("dataset.split 'official' needs dataset.test_path")
        return train, test
    syn = ds["synthetic"]
    if not syn["enabled"]:
        raise ContractViolation("dataset.train_path is not set and synthetic data is disabled")
    outdir = data_root / f"synthetic-{ds['name']}-{syn['train_rows']}-{syn['test_rows']}-s{syn['seed']}"
    train, test = write_dataset(ds["name"], outdir, syn["train_rows"], syn["test_rows"], syn["seed"]) \
        if not outdir.exists() else _existing(ds["name"], outdir)
    return train, test


def _existing(name: str, outdir: Path) -> tuple[Path, Path]:
    if name == "nsl_kdd":
        return outdir / "KDDTrain+.txt", outdir / "KDDTest+.txt"
    return outdir / "UNSW_NB15_training-set.csv", outdir / "UNSW_NB15_testing-set.csv"


def _stratified_split(labels: np.ndarray, fraction: float, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    test = []
    for j, cls in enumerate((0, 1)):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.child(j).permutation(idx.size)]
        test.append(idx[: int(round(fraction * idx.size))])
    test_idx = np.sort(np.concatenate(test))
    train_idx = np.setdiff1d(np.arange(labels.size), test_idx)
    return train_idx, test_idx


def prepare_data(cfg: RunConfig, data_root: Path) -> PreparedData:
    """Load raw files, fit the pipeline on training rows only, transform both splits."""
    ds = cfg["dataset"]
    schema = load_schema(ds["schema"] or ds["name"])
    data_root = Path(data_root)
    train_path, test_path = resolve_paths(cfg, data_root)

    def shown(path: Path) -> str:
        # generated files live under the output root; record them relative to
        # it so the same config gives the same manifests wherever it runs
        return path.relative_to(data_root).as_posix() if ds["train_path"] is None else str(path)

    raw_train = load_dataset(train_path, schema)
    sources = {"train": {"path": shown(train_path), "sha256": raw_train.checksum, "rows": len(raw_train)}}
    if ds["split"] == "official":
        raw_test = load_dataset(test_path, schema)
        sources["test"] = {"path": shown(test_path), "sha256": raw_test.checksum, "rows": len(raw_test)}
    else:
        tr, te = _stratified_split(raw_train.labels, float(ds["test_fraction"]), RngStream(ds["synthetic"]["seed"]))
        raw_test = raw_train.subset(te)
        raw_train = raw_train.subset(tr)
    pipe = preprocess.fit(raw_train)
    return PreparedData(
        pipe=pipe,
        train=preprocess.transform(pipe, raw_train),
        test=preprocess.transform(pipe, raw_test),
        split=ds["split"],
        sources=sources,
    )


def subsample(cfg: RunConfig, prepared: PreparedData, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    rng = RngStream(seed).child(0)
    out = []
    for j, (key, data) in enumerate((("train", prepared.train), ("test", prepared.test))):
        n = cfg["subsample"][key]
        out.append(data if n is None or n >= len(data) else stratified_subsample(data, n, rng.child(j)))
    return out[0], out[1]


# ------------------------------------------------------------------- train

def train_baselines(cfg: RunConfig, train: LabeledDataset, seed: int) -> dict:
    """Every configured baseline plus the attack-side support models."""
    hp = cfg["models"]["hyperparameters"]
    wanted = list(dict.fromkeys([*cfg["models"]["baselines"], *ATTACK_SUPPORT]))
    rng = RngStream(seed).child(1)
    models = {}
    for alg in wanted:
        # stream index follows a fixed global order, not the list position
        k = ("DT", "GB", "Bagging", "KNN", "LR", "MLP", "LDA", "RF").index(alg)
        models[alg] = train_classifier(ClassifierSpec(alg, hp.get(alg, {})), train, rng.child(k))
    return models


def voting_ensemble(models: dict) -> VotingEnsemble:
    return VotingEnsemble(models["KNN"], models["LDA"], models["LR"])


# ------------------------------------------------------------------ attack

@dataclass
class AttackResult:
    gan: GanState | None
    train_batches: dict  # provenance -> AdversarialBatch (from training malicious rows)
    test_batches: dict  # provenance -> AdversarialBatch (from test malicious rows)
    sweep: dict = field(default_factory=dict)  # eps -> AdversarialBatch on test malicious rows


def run_attacks(
    cfg: RunConfig, models: dict, train: LabeledDataset, test: LabeledDataset,
    pipe: FittedPipeline, seed: int,
) -> AttackResult:
    at = cfg["attack"]
    rng = RngStream(seed).child(2)
    train_mal, test_mal = train.malicious(), test.malicious()
    gan = None
    train_b, test_b, sweep = {}, {}, {}
    if "gan" in at["methods"]:
        gan = train_gan(train_mal, train.benign(), voting_ensemble(models), at["gan"], rng.child(0), pipe)
        train_b["GAN"] = generate_adversarial(gan, train_mal, rng.child(1))
        test_b["GAN"] = generate_adversarial(gan, test_mal, rng.child(2))
    if "fgsm" in at["methods"]:
        net = models["MLP"].net
        eps = float(at["fgsm_eps"])
        train_b["FGSM"] = fgsm_batch(net, train_mal, eps, pipe)
        test_b["FGSM"] = fgsm_batch(net, test_mal, eps, pipe)
        for e in at["eps_sweep"]:
            sweep[float(e)] = fgsm_batch(net, test_mal, float(e), pipe)
    return AttackResult(gan, train_b, test_b, sweep)


# ----------------------------------------------------------------- defense

@dataclass
class DefenseResult:
    ae: Autoencoder
    sc: StackingModel
    sc_at: StackingModel | None
    ae_at: Autoencoder  # same object as ``ae`` unless AE retraining is enabled
    cross: dict = field(default_factory=dict)  # provenance trained on -> StackingModel

    def detector(self, variant: str) -> TwoLayerDetector:
        if variant not in ABLATION_VARIANTS:
            raise ContractViolation(f"unknown variant {variant!r}")
        stack = self.sc_at if "AT" in variant else self.sc
        if stack is None:
            raise ContractViolation("adversarial training was not run (no attack batches)")
        ae = (self.ae_at if "AT" in variant else self.ae) if variant.endswith("AE") else None
        return TwoLayerDetector(stack, ae)


def _split_benign(train: LabeledDataset, fraction: float, rng: RngStream):
    ben = train.benign()
    order = rng.permutation(len(ben))
    n_val = max(1, int(round(fraction * len(ben))))
    return ben.subset(np.sort(order[n_val:])), ben.subset(np.sort(order[:n_val]))


def fit_gate(cfg: RunConfig, train: LabeledDataset, rng: RngStream) -> Autoencoder:
    df = cfg["defense"]
    fit_part, val_part = _split_benign(train, float(df["ae_validation_fraction"]), rng.child(0))
    ae = train_autoencoder(fit_part, df["ae_epochs"], rng.child(1), lr=float(df["ae_lr"]))
    ae.threshold = calibrate_threshold(ae, val_part)
    return ae


def run_defense(cfg: RunConfig, models: dict, train: LabeledDataset, attack: AttackResult, seed: int) -> DefenseResult:
    df = cfg["defense"]
    rng = RngStream(seed).child(3)
    hp = cfg["models"]["hyperparameters"]
    ae = fit_gate(cfg, train, rng.child(0))

    def stack(data: LabeledDataset, k: int) -> StackingModel:
        return train_stacking(data, df["folds"], rng.child(k), hp, df["meta_mode"])

    sc = stack(train, 1)
    sc_at = None
    ae_at = ae
    cross = {}
    batches = list(attack.train_batches.values())
    if batches:
        aug = adversarial_augment(train, batches, float(df["fraction"]), rng.child(2))
        sc_at = stack(aug.to_dataset(train), 3)
        if df["retrain_ae"]:
            ae_at = fit_gate(cfg, aug.to_dataset(train), rng.child(4))
        if df["cross_test"] and len(attack.train_batches) == 2:
            for j, kind in enumerate(sorted(attack.train_batches)):
                one = adversarial_augment(train, [attack.train_batches[kind]], float(df["fraction"]),
                                          rng.child(5).child(j))
                cross[kind] = stack(one.to_dataset(train), 6 + j)
    return DefenseResult(ae, sc, sc_at, ae_at, cross)


# -------------------------------------------------------------- conditions

def condition_sets(test: LabeledDataset, batches: dict) -> dict:
    """Test matrices per condition; adversarial rows replace malicious ones."""
    out = {"unmodified": (test.features, test.labels)}
    mal = np.flatnonzero(test.labels == 1)
    for kind, batch in sorted(batches.items()):
        x = test.features.copy()
        x[mal[batch.source_index]] = batch.features
        out[kind] = (x, test.labels.copy())
    if len(batches) == 2:
        ben = np.flatnonzero(test.labels == 0)
        x = np.vstack([test.features[ben], batches["GAN"].features, batches["FGSM"].features])
        y = np.concatenate([np.zeros(ben.size, dtype=np.int64), np.ones(len(batches["GAN"]) + len(batches["FGSM"]),
                                                                        dtype=np.int64)])
        out["all"] = (x, y)
    return out


def check_superset(defense: DefenseResult, x: np.ndarray) -> None:
    """The gated detector must flag every row its stacking layer flags."""
    for stack, ae in ((defense.sc, defense.ae), (defense.sc_at, defense.ae_at)):
        if stack is None:
            continue
        first = stack.predict(x)
        full = TwoLayerDetector(stack, ae).predict(x)
        if np.any((first == 1) & (full == 0)):
            raise InvariantViolation("two-layer detector dropped a row flagged by the stacking layer")
