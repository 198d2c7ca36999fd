"""Dense feed-forward network with hand-written forward and backward passes.

One class serves the MLP classifier, the autoencoder and both GAN networks.
Hidden layers use ReLU; the output layer is either sigmoid or linear.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolation
from ..numerics import RngStream

P_CLAMP = 1e-7
LEAK = 0.2


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each layer
    pre: list[np.ndarray]  # pre-activation of each layer
    output: np.ndarray


@dataclass
class MlpNetwork:
    sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    output_activation: str = "sigmoid"
    hidden_activation: str = "relu"
    meta: dict = field(default_factory=dict)

    @classmethod
    def initialize(
        cls, sizes, rng: RngStream, output_activation: str = "sigmoid",
        hidden_activation: str = "relu",
    ) -> "MlpNetwork":
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ContractViolation(f"invalid layer sizes {sizes}")
        weights, biases = [], []
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = k == len(sizes) - 2
            scale = np.sqrt((1.0 if last else 2.0) / fan_in)
            weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        if hidden_activation not in ("relu", "leaky_relu"):
            raise ContractViolation(f"unknown hidden activation {hidden_activation!r}")
        return cls(sizes, weights, biases, output_activation, hidden_activation)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def output_dim(self) -> int:
        return self.sizes[-1]

    def copy(self) -> "MlpNetwork":
        return MlpNetwork(
            list(self.sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.output_activation,
            self.hidden_activation,
            dict(self.meta),
        )

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.input_dim:
            raise ContractViolation(f"network expects {self.input_dim} inputs, got {x.shape[1]}")
        return x

    def forward_cached(self, x) -> ForwardCache:
        a = self._check_input(x)
        inputs, pre = [], []
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(a)
            z = a @ w + b
            pre.append(z)
            if k < self.n_layers - 1:
                a = np.maximum(z, 0.0) if self.hidden_activation == "relu" else np.where(z > 0, z, LEAK * z)
            elif self.output_activation == "sigmoid":
                a = sigmoid(z)
            else:
                a = z
        return ForwardCache(inputs, pre, a)

    def forward(self, x) -> np.ndarray:
        return self.forward_cached(x).output

    def logits(self, x) -> np.ndarray:
        return self.forward_cached(x).pre[-1]

    def backward(self, cache: ForwardCache, grad_pre_out: np.ndarray):
        """Backpropagate a gradient w.r.t. the output layer's pre-activation.

        Returns ``(weight_grads, bias_grads, input_grad)``.
        """
        delta = np.asarray(grad_pre_out, dtype=np.float64)
        gw = [None] * self.n_layers
        gb = [None] * self.n_layers
        for k in range(self.n_layers - 1, -1, -1):
            gw[k] = cache.inputs[k].T @ delta
            gb[k] = delta.sum(axis=0)
            delta = delta @ self.weights[k].T
            if k > 0:
                if self.hidden_activation == "relu":
                    delta = delta * (cache.pre[k - 1] > 0)
                else:
                    delta = delta * np.where(cache.pre[k - 1] > 0, 1.0, LEAK)
        return gw, gb, delta

    def backward_output(self, cache: ForwardCache, grad_out: np.ndarray):
        """Like :meth:`backward` but takes the gradient w.r.t. the activated output."""
        g = np.asarray(grad_out, dtype=np.float64)
        if self.output_activation == "sigmoid":
            p = cache.output
            g = g * p * (1.0 - p)
        return self.backward(cache, g)

    def sgd_step(self, gw, gb, lr: float) -> None:
        for k in range(self.n_layers):
            self.weights[k] -= lr * gw[k]
            self.biases[k] -= lr * gb[k]

    def bce_loss(self, x, y, sample_weight=None) -> float:
        p = np.clip(self.forward(x)[:, 0], P_CLAMP, 1.0 - P_CLAMP)
        y = np.asarray(y, dtype=np.float64).ravel()
        losses = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
        if sample_weight is not None:
            losses = losses * sample_weight
        return float(losses.sum() / y.size)

    def bce_gradients(self, x, y, sample_weight=None):
        """Parameter and input gradients of the mean (weighted) BCE loss."""
        if self.output_activation != "sigmoid" or self.output_dim != 1:
            raise ContractViolation("BCE gradients need a single sigmoid output")
        cache = self.forward_cached(x)
        y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
        g = (cache.output - y) / y.shape[0]
        if sample_weight is not None:
            g = g * np.asarray(sample_weight, dtype=np.float64).reshape(-1, 1)
        return self.backward(cache, g)

    def input_gradient(self, x, y) -> np.ndarray:
        """Gradient of the BCE loss at ``(x, y)`` w.r.t. the input vector(s).

        For a batch, row ``i`` holds the gradient of sample ``i``'s own loss.
        """
        x = self._check_input(x)
        y = np.broadcast_to(np.asarray(y, dtype=np.float64).ravel(), (x.shape[0],))
        cache = self.forward_cached(x)
        g = cache.output - y.reshape(-1, 1)
        _, _, gin = self.backward(cache, g)
        return gin

    def to_dict(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "output_activation": self.output_activation,
            "hidden_activation": self.hidden_activation,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpNetwork":
        return cls(
            sizes=[int(s) for s in doc["sizes"]],
            weights=[np.asarray(w, dtype=np.float64).reshape(a, b) for w, a, b in zip(
                doc["weights"], doc["sizes"][:-1], doc["sizes"][1:])],
            biases=[np.asarray(b, dtype=np.float64) for b in doc["biases"]],
            output_activation=doc.get("output_activation", "sigmoid"),
            hidden_activation=doc.get("hidden_activation", "relu"),
            meta=doc.get("meta", {}),
        )


def minibatches(n: int, batch_size: int, rng: RngStream):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train_bce(
    net: MlpNetwork,
    x: np.ndarray,
    y: np.ndarray,
    *,
    epochs: int,
    batch_size: int,
    lr: float,
    rng: RngStream,
    l2: float = 0.0,
) -> list[float]:
    """Plain minibatch gradient descent on mean BCE. Returns per-epoch training loss."""
    history = [net.bce_loss(x, y)]
    for _ in range(epochs):
        for idx in minibatches(x.shape[0], batch_size, rng):
            gw, gb, _ = net.bce_gradients(x[idx], y[idx])
            if l2:
                gw = [g + l2 * w for g, w in zip(gw, net.weights)]
            net.sgd_step(gw, gb, lr)
        history.append(net.bce_loss(x, y))
    return history
