"""MLP classifier and the benign-traffic autoencoder."""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolation
from ..numerics import RngStream
from .mlp import MlpNetwork, minibatches, train_bce


class MLPClassifier:
    """Three fully connected layers (two ReLU hidden, sigmoid output) trained by
    momentum-free minibatch gradient descent."""

    algorithm = "MLP"

    def __init__(self, hidden=(64, 64), lr: float = 0.05, epochs: int = 50,
                 batch_size: int = 128, l2: float = 0.0):
        self.hidden = tuple(int(h) for h in hidden)
        if not self.hidden or min(self.hidden) < 1:
            raise ContractViolation("hidden sizes must be positive")
        self.lr = float(lr)
        self.epochs = int(epochs)
        self.batch_size = int(batch_size)
        self.l2 = float(l2)
        self.net: MlpNetwork | None = None
        self.loss_history: list[float] = []

    def fit(self, x, y, rng: RngStream):
        self.net = MlpNetwork.initialize([x.shape[1], *self.hidden, 1], rng.child(0))
        self.loss_history = train_bce(
            self.net, x, y.astype(np.float64), epochs=self.epochs,
            batch_size=self.batch_size, lr=self.lr, rng=rng.child(1), l2=self.l2,
        )
        return self

    def predict_proba(self, x):
        return self.net.forward(x)[:, 0]

    def params(self) -> dict:
        return {"net": self.net.to_dict()}

    def load_params(self, doc: dict) -> None:
        self.net = MlpNetwork.from_dict(doc["net"])


class Autoencoder:
    """d -> 64 -> 32 -> 64 -> d reconstruction network with a linear output.

    ``threshold`` (beta) is set by calibration; reconstruction error above it
    marks a sample anomalous.
    """

    def __init__(self, net: MlpNetwork, threshold: float | None = None):
        self.net = net
        self.threshold = threshold
        self.loss_history: list[float] = []

    @classmethod
    def initialize(cls, d: int, rng: RngStream, hidden=(64, 32)) -> "Autoencoder":
        hidden = [int(h) for h in hidden]
        sizes = [d, *hidden, *reversed(hidden[:-1]), d]
        return cls(MlpNetwork.initialize(sizes, rng, output_activation="linear"))

    @property
    def input_dim(self) -> int:
        return self.net.input_dim

    def reconstruct(self, x) -> np.ndarray:
        return self.net.forward(x)

    def errors(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.mean((x - self.reconstruct(x)) ** 2, axis=1)

    def loss(self, x) -> float:
        return float(self.errors(x).mean())

    def gradients(self, x):
        """Parameter and input gradients of the mean reconstruction loss."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        cache = self.net.forward_cached(x)
        n, d = x.shape
        g_out = 2.0 * (cache.output - x) / (n * d)
        gw, gb, gin = self.net.backward(cache, g_out)
        # x also enters the loss directly as the reconstruction target
        return gw, gb, gin - g_out

    def to_dict(self) -> dict:
        return {"net": self.net.to_dict(), "threshold": self.threshold}

    @classmethod
    def from_dict(cls, doc: dict) -> "Autoencoder":
        return cls(MlpNetwork.from_dict(doc["net"]), doc.get("threshold"))


def train_autoencoder(benign, epochs: int, rng: RngStream, *, lr: float = 0.01,
                      batch_size: int = 64, hidden=(64, 32)) -> Autoencoder:
    """Fit an autoencoder on benign rows only (``benign`` is a LabeledDataset)."""
    if np.any(benign.labels != 0):
        raise ContractViolation("autoencoder training data must contain only benign rows")
    if len(benign) == 0:
        raise ContractViolation("autoencoder training data is empty")
    x = benign.features
    ae = Autoencoder.initialize(x.shape[1], rng.child(0), hidden)
    order_rng = rng.child(1)
    ae.loss_history = [ae.loss(x)]
    for _ in range(int(epochs)):
        for idx in minibatches(x.shape[0], batch_size, order_rng):
            gw, gb, _ = ae.gradients(x[idx])
            ae.net.sgd_step(gw, gb, lr)
        ae.loss_history.append(ae.loss(x))
    return ae


def reconstruction_error(ae: Autoencoder, x) -> float | np.ndarray:
    """Mean squared reconstruction error; scalar for a vector, array for a matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != ae.input_dim:
        raise ContractViolation(f"autoencoder expects {ae.input_dim} features, got {x.shape[-1]}")
    errs = ae.errors(x)
    return float(errs[0]) if x.ndim == 1 else errs
