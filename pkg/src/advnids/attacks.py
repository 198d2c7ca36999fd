"""Adversarial flow generation: FGSM against an MLP surrogate and a GAN whose
discriminator is reinforced by an offline KNN / LDA / LR majority vote.

Both attacks touch mutable features only; immutable coordinates of every
generated row are copied bit-for-bit from the source row.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataio import LabeledDataset
from .errors import ContractViolation, SchemaError
from .models import ClassifierSpec, MlpNetwork, predict, train_classifier
from .models.mlp import P_CLAMP, minibatches
from .numerics import RngStream
from .preprocess import FittedPipeline

log = logging.getLogger(__name__)

MALICIOUS_WEIGHT = 2.0
PROVENANCES = ("GAN", "FGSM")


def bce_loss(y, p) -> float:
    """Binary cross-entropy, averaged over the batch; p is clamped to [1e-7, 1-1e-7]."""
    y = np.asarray(y, dtype=np.float64)
    p = np.clip(np.asarray(p, dtype=np.float64), P_CLAMP, 1.0 - P_CLAMP)
    losses = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(np.mean(losses))


def majority_vote(c1, c2, c3, d):
    """Majority of three classifier votes plus the discriminator's; 2-2 ties are malicious."""
    votes = [np.asarray(v) for v in (c1, c2, c3, d)]
    for v in votes:
        if not np.all(np.isin(v, (0, 1))):
            raise ContractViolation("votes must be 0 or 1")
    total = sum(v.astype(np.int64) for v in votes)
    out = (total >= 2).astype(np.int64)
    return int(out) if out.ndim == 0 else out


@dataclass
class VotingEnsemble:
    knn: object
    lda: object
    lr: object

    @property
    def n_features(self) -> int:
        return self.knn.n_features

    def votes(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.stack([predict(m, x) for m in (self.knn, self.lda, self.lr)], axis=1)


def train_voting_ensemble(data: LabeledDataset, rng: RngStream, specs: dict | None = None) -> VotingEnsemble:
    specs = specs or {}
    models = [
        train_classifier(ClassifierSpec(alg, specs.get(alg, {})), data, rng.child(i))
        for i, alg in enumerate(("KNN", "LDA", "LR"))
    ]
    ens = VotingEnsemble(*models)
    if len({m.n_features for m in models}) != 1:
        raise ContractViolation("ensemble members disagree on input dimension")
    return ens


# ------------------------------------------------------------------- FGSM

def _clip_mutable(x_src, x_new, mask, lower, upper):
    """Clamp mutable coordinates into the training domain, widened so a
    source point that already lies outside is never pushed further than its
    own perturbation."""
    lo = np.minimum(lower, x_src)
    hi = np.maximum(upper, x_src)
    clipped = np.clip(x_new, lo, hi)
    return np.where(mask, clipped, x_src)


def fgsm_generate(net: MlpNetwork, x, y, eps: float, mutable_mask, pipe: FittedPipeline | None = None):
    """``x' = x + eps * sign(grad_x J)`` on mutable coordinates, then clipped.

    Works on one vector or a batch of rows; ``sign(0) = 0``.
    """
    if eps < 0:
        raise ContractViolation("eps must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    mask = np.asarray(mutable_mask, dtype=bool)
    if x.shape[-1] != mask.size or x.shape[-1] != net.input_dim:
        raise ContractViolation("x, mutable_mask and network input dimension disagree")
    if eps == 0:
        return x.copy()
    grad = net.input_gradient(x, y)
    grad = grad[0] if x.ndim == 1 else grad
    x_new = x + eps * np.sign(grad) * mask
    if pipe is not None:
        x_new = _clip_mutable(x, x_new, mask, pipe.lower, pipe.upper)
    return x_new


# -------------------------------------------------------------------- GAN

@dataclass
class GanConfig:
    noise_dims: int | None = None  # defaults to |M|
    epochs: int = 100
    batch_size: int = 128
    lr_generator: float = 0.01
    lr_discriminator: float = 0.01
    noise_scale: float = 0.1
    generator_hidden: tuple[int, ...] = (64, 64)
    discriminator_hidden: tuple[int, ...] = (64, 32)
    malicious_weight: float = MALICIOUS_WEIGHT
    include_real_malicious: bool = False
    probe_size: int = 512
    hidden_activation: str = "leaky_relu"

    @classmethod
    def from_dict(cls, doc: dict | None) -> "GanConfig":
        doc = dict(doc or {})
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ContractViolation(f"unknown GAN settings {sorted(unknown)}")
        for key in ("generator_hidden", "discriminator_hidden"):
            if key in doc:
                doc[key] = tuple(int(v) for v in doc[key])
        return cls(**doc)


@dataclass
class GanState:
    generator: MlpNetwork
    discriminator: MlpNetwork
    ensemble: VotingEnsemble | None
    mutable_idx: np.ndarray
    immutable_idx: np.ndarray
    config: GanConfig
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    history: list[dict] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.mutable_idx.size + self.immutable_idx.size

    @property
    def noise_dims(self) -> int:
        return self.generator.input_dim - self.mutable_idx.size

    def generator_input(self, mutable: np.ndarray, z: np.ndarray) -> np.ndarray:
        corrupted = mutable + self.config.noise_scale * z
        return np.hstack([corrupted, z])

    def assemble(self, mutable_out: np.ndarray, source: np.ndarray) -> np.ndarray:
        x = np.array(source, dtype=np.float64, copy=True)
        x[:, self.mutable_idx] = mutable_out
        return x

    def sample_noise(self, n: int, rng: RngStream) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, size=(n, self.noise_dims))

    def generate_raw(self, source: np.ndarray, z: np.ndarray) -> np.ndarray:
        g_in = self.generator_input(source[:, self.mutable_idx], z)
        return self.assemble(self.generator.forward(g_in), source)

    def to_dict(self) -> dict:
        return {
            "generator": self.generator.to_dict(),
            "discriminator": self.discriminator.to_dict(),
            "mutable_idx": self.mutable_idx.tolist(),
            "immutable_idx": self.immutable_idx.tolist(),
            "config": asdict(self.config),
            "lower": None if self.lower is None else self.lower.tolist(),
            "upper": None if self.upper is None else self.upper.tolist(),
            "history": self.history,
        }

    @classmethod
    def from_dict(cls, doc: dict, ensemble: VotingEnsemble | None = None) -> "GanState":
        return cls(
            generator=MlpNetwork.from_dict(doc["generator"]),
            discriminator=MlpNetwork.from_dict(doc["discriminator"]),
            ensemble=ensemble,
            mutable_idx=np.asarray(doc["mutable_idx"], dtype=np.int64),
            immutable_idx=np.asarray(doc["immutable_idx"], dtype=np.int64),
            config=GanConfig.from_dict(doc["config"]),
            lower=None if doc.get("lower") is None else np.asarray(doc["lower"]),
            upper=None if doc.get("upper") is None else np.asarray(doc["upper"]),
            history=doc.get("history", []),
        )


def _discriminator_step(gan: GanState, benign_x, gen_x, gen_w, real_mal_x, lr):
    parts_x = [benign_x, gen_x]
    parts_y = [np.zeros(benign_x.shape[0]), np.ones(gen_x.shape[0])]
    parts_w = [np.ones(benign_x.shape[0]), gen_w]
    if real_mal_x is not None:
        parts_x.append(real_mal_x)
        parts_y.append(np.ones(real_mal_x.shape[0]))
        parts_w.append(np.ones(real_mal_x.shape[0]))
    x = np.vstack(parts_x)
    y = np.concatenate(parts_y)
    w = np.concatenate(parts_w)
    loss = gan.discriminator.bce_loss(x, y, w)
    gw, gb, _ = gan.discriminator.bce_gradients(x, y, w)
    gan.discriminator.sgd_step(gw, gb, lr)
    return loss


def generator_loss_and_grads(gan: GanState, source: np.ndarray, z: np.ndarray):
    """BCE of the discriminator scoring generated rows as benign, with the
    generator's parameter gradients (backprop through D into G)."""
    g_in = gan.generator_input(source[:, gan.mutable_idx], z)
    g_cache = gan.generator.forward_cached(g_in)
    x_gen = gan.assemble(g_cache.output, source)
    d_cache = gan.discriminator.forward_cached(x_gen)
    n = x_gen.shape[0]
    target = np.zeros((n, 1))
    p = np.clip(d_cache.output, P_CLAMP, 1 - P_CLAMP)
    loss = float(np.mean(-(target * np.log(p) + (1 - target) * np.log(1 - p))))
    _, _, g_x = gan.discriminator.backward(d_cache, (d_cache.output - target) / n)
    gw, gb, _ = gan.generator.backward(g_cache, g_x[:, gan.mutable_idx])
    return loss, gw, gb


def evasion_rate(gan: GanState, x_gen: np.ndarray) -> float:
    """Fraction of generated rows the vote (ensemble + discriminator) calls benign."""
    d_vote = (gan.discriminator.forward(x_gen)[:, 0] >= 0.5).astype(np.int64)
    if gan.ensemble is None:
        return float(np.mean(d_vote == 0))
    v = gan.ensemble.votes(x_gen)
    return float(np.mean(majority_vote(v[:, 0], v[:, 1], v[:, 2], d_vote) == 0))


def train_gan(
    malicious: LabeledDataset,
    benign: LabeledDataset,
    ensemble: VotingEnsemble | None,
    config: GanConfig | dict | None,
    rng: RngStream,
    pipe: FittedPipeline | None = None,
) -> GanState:
    """Alternate discriminator and generator updates for ``config.epochs`` epochs.

    The discriminator separates real benign rows (target 0) from generated
    rows (target 1); generated rows that the vote flags malicious carry
    ``malicious_weight`` in its loss. The generator is trained through the
    discriminator to have its rows scored benign.
    """
    cfg = config if isinstance(config, GanConfig) else GanConfig.from_dict(config)
    if len(malicious) == 0 or np.any(malicious.labels != 1):
        raise ContractViolation("malicious input must be non-empty and contain only label-1 rows")
    if len(benign) == 0 or np.any(benign.labels != 0):
        raise ContractViolation("benign input must be non-empty and contain only label-0 rows")
    schema = malicious.schema
    mutable_idx = schema.mutable_indices
    immutable_idx = schema.immutable_indices
    d = malicious.n_features
    if mutable_idx.size == 0:
        raise ContractViolation("schema declares no mutable features")
    if ensemble is not None and ensemble.n_features != d:
        raise ContractViolation("voting ensemble input dimension does not match the data")
    noise_dims = cfg.noise_dims if cfg.noise_dims is not None else mutable_idx.size
    m = mutable_idx.size
    gan = GanState(
        generator=MlpNetwork.initialize([m + noise_dims, *cfg.generator_hidden, m], rng.child(0), "linear",
                                        cfg.hidden_activation),
        discriminator=MlpNetwork.initialize([d, *cfg.discriminator_hidden, 1], rng.child(1), "sigmoid",
                                            cfg.hidden_activation),
        ensemble=ensemble,
        mutable_idx=mutable_idx,
        immutable_idx=immutable_idx,
        config=cfg,
        lower=None if pipe is None else pipe.lower,
        upper=None if pipe is None else pipe.upper,
    )
    mal_x, ben_x = malicious.features, benign.features
    probe_rng = rng.child(2)
    probe_idx = np.sort(probe_rng.choice(mal_x.shape[0], size=min(cfg.probe_size, mal_x.shape[0]), replace=False))
    probe_src = mal_x[probe_idx]
    probe_z = gan.sample_noise(probe_src.shape[0], probe_rng)

    def record(epoch, d_loss, g_loss):
        x_gen = gan.generate_raw(probe_src, probe_z)
        gan.history.append({
            "epoch": epoch,
            "discriminator_loss": d_loss,
            "generator_loss": g_loss,
            "evasion_rate": evasion_rate(gan, x_gen),
        })

    z0 = gan.sample_noise(probe_src.shape[0], probe_rng.child(0))
    record(0, None, generator_loss_and_grads(gan, probe_src, z0)[0])
    order_rng, noise_rng, ben_rng = rng.child(3), rng.child(4), rng.child(5)
    for epoch in range(1, cfg.epochs + 1):
        d_losses, g_losses = [], []
        for idx in minibatches(mal_x.shape[0], cfg.batch_size, order_rng):
            src = mal_x[idx]
            b = ben_x[ben_rng.integers(0, ben_x.shape[0], size=idx.size)]
            z = gan.sample_noise(idx.size, noise_rng)
            x_gen = gan.generate_raw(src, z)
            d_vote = (gan.discriminator.forward(x_gen)[:, 0] >= 0.5).astype(np.int64)
            if ensemble is not None:
                v = ensemble.votes(x_gen)
                flagged = majority_vote(v[:, 0], v[:, 1], v[:, 2], d_vote)
            else:
                flagged = d_vote
            w = np.where(flagged == 1, cfg.malicious_weight, 1.0)
            d_losses.append(_discriminator_step(
                gan, b, x_gen, w, src if cfg.include_real_malicious else None, cfg.lr_discriminator))
            z = gan.sample_noise(idx.size, noise_rng)
            g_loss, gw, gb = generator_loss_and_grads(gan, src, z)
            gan.generator.sgd_step(gw, gb, cfg.lr_generator)
            g_losses.append(g_loss)
        record(epoch, float(np.mean(d_losses)), float(np.mean(g_losses)))
        if epoch % 25 == 0 or epoch == cfg.epochs:
            h = gan.history[-1]
            log.info("gan epoch %d: D %.4f G %.4f evasion %.3f", epoch,
                     h["discriminator_loss"], h["generator_loss"], h["evasion_rate"])
    return gan


@dataclass
class AdversarialBatch:
    features: np.ndarray
    provenance: str
    source_index: np.ndarray
    seeds: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ContractViolation(f"unknown provenance {self.provenance!r}")
        self.features = np.asarray(self.features, dtype=np.float64)
        self.source_index = np.asarray(self.source_index, dtype=np.int64)

    @property
    def labels(self) -> np.ndarray:
        return np.ones(self.features.shape[0], dtype=np.int64)

    def __len__(self) -> int:
        return self.features.shape[0]

    def checksum(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.features).tobytes()).hexdigest()


def generate_adversarial(gan: GanState, malicious: LabeledDataset, rng: RngStream) -> AdversarialBatch:
    if np.any(malicious.labels != 1):
        raise ContractViolation("source rows must all be malicious")
    src = malicious.features
    z = gan.sample_noise(src.shape[0], rng)
    x = gan.generate_raw(src, z)
    if gan.lower is not None:
        mask = np.zeros(src.shape[1], dtype=bool)
        mask[gan.mutable_idx] = True
        x = np.where(mask, np.clip(x, gan.lower, gan.upper), src)
    return AdversarialBatch(
        features=x,
        provenance="GAN",
        source_index=np.arange(src.shape[0]),
        seeds={"seed": rng.seed, "path": list(rng.path)},
        params={"gan": asdict(gan.config)},
        feature_names=list(malicious.feature_names),
    )


def fgsm_batch(net: MlpNetwork, malicious: LabeledDataset, eps: float, pipe: FittedPipeline | None) -> AdversarialBatch:
    if np.any(malicious.labels != 1):
        raise ContractViolation("source rows must all be malicious")
    x = fgsm_generate(net, malicious.features, 1, eps, malicious.schema.mutable_mask, pipe)
    return AdversarialBatch(
        features=np.atleast_2d(x),
        provenance="FGSM",
        source_index=np.arange(len(malicious)),
        params={"eps": float(eps)},
        feature_names=list(malicious.feature_names),
    )


def save_batch(batch: AdversarialBatch, path, source_checksum: str = "") -> None:
    """CSV with a ``#``-prefixed provenance header block, then one row per sample."""
    header = {
        "attack": batch.provenance,
        "params": batch.params,
        "seeds": batch.seeds,
        "source_checksum": source_checksum,
        "rows": len(batch),
    }
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, val in header.items():
            fh.write(f"# {key}: {json.dumps(val, sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_index", *batch.feature_names, "label"])
        for i in range(len(batch)):
            w.writerow([int(batch.source_index[i]), *(repr(float(v)) for v in batch.features[i]), 1])


def load_batch(path) -> AdversarialBatch:
    meta: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            key, _, val = line[2:].partition(": ")
            meta[key] = json.loads(val)
        else:
            body.append(line)
    rows = list(csv.reader(body))
    if not rows:
        raise SchemaError(f"{path}: missing column header")
    names = rows[0][1:-1]
    data = rows[1:]
    feats = np.array([[float(v) for v in r[1:-1]] for r in data], dtype=np.float64).reshape(len(data), len(names))
    return AdversarialBatch(
        features=feats,
        provenance=meta.get("attack", "GAN"),
        source_index=np.array([int(r[0]) for r in data], dtype=np.int64),
        seeds=meta.get("seeds", {}),
        params=meta.get("params", {}),
        feature_names=names,
    )
