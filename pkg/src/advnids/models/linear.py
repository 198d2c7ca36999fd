"""Logistic regression, linear discriminant analysis and k-nearest neighbours."""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolation
from ..numerics import RngStream
from .mlp import sigmoid


class LogisticRegression:
    """Full-batch gradient descent on L2-regularised mean BCE.

    The step is ``1 / L`` with ``L`` the Lipschitz constant of the loss
    gradient, so the training loss never increases.
    """

    algorithm = "LR"

    def __init__(self, l2: float = 1e-4, epochs: int = 300, tol: float = 1e-10):
        self.l2 = float(l2)
        self.epochs = int(epochs)
        self.tol = float(tol)
        self.weights = np.zeros(0)
        self.bias = 0.0
        self.loss_history: list[float] = []

    def _loss(self, x, y, w, b) -> float:
        p = np.clip(sigmoid(x @ w + b), 1e-12, 1 - 1e-12)
        return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)) + 0.5 * self.l2 * w @ w)

    def fit(self, x, y, rng: RngStream | None = None):
        n, d = x.shape
        yf = y.astype(np.float64)
        xa = np.hstack([x, np.ones((n, 1))])
        lipschitz = 0.25 * np.linalg.norm(xa, 2) ** 2 / n + self.l2
        step = 1.0 / lipschitz
        w = np.zeros(d)
        b = 0.0
        self.loss_history = [self._loss(x, yf, w, b)]
        for _ in range(self.epochs):
            r = sigmoid(x @ w + b) - yf
            gw = x.T @ r / n + self.l2 * w
            gb = r.mean()
            w = w - step * gw
            b = b - step * gb
            self.loss_history.append(self._loss(x, yf, w, b))
            if self.loss_history[-2] - self.loss_history[-1] < self.tol:
                break
        self.weights, self.bias = w, float(b)
        return self

    def decision_function(self, x):
        return x @ self.weights + self.bias

    def predict_proba(self, x):
        return sigmoid(self.decision_function(x))

    def params(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias}

    def load_params(self, doc: dict) -> None:
        self.weights = np.asarray(doc["weights"], dtype=np.float64)
        self.bias = float(doc["bias"])


class LinearDiscriminantAnalysis:
    """Two-class LDA with a pooled covariance; posterior is a logistic of a linear score."""

    algorithm = "LDA"

    def __init__(self, shrinkage: float = 1e-6):
        self.shrinkage = float(shrinkage)
        self.means = np.zeros((2, 0))
        self.priors = np.array([0.5, 0.5])
        self.weights = np.zeros(0)
        self.bias = 0.0

    def fit(self, x, y, rng: RngStream | None = None):
        classes = np.unique(y)
        if classes.size != 2:
            raise ContractViolation("LDA needs both classes: covariance is undefined otherwise")
        x0, x1 = x[y == 0], x[y == 1]
        n = x.shape[0]
        if n < 3:
            raise ContractViolation("LDA needs at least three rows")
        mu0, mu1 = x0.mean(axis=0), x1.mean(axis=0)
        centered = np.vstack([x0 - mu0, x1 - mu1])
        cov = centered.T @ centered / (n - 2)
        d = x.shape[1]
        ridge = self.shrinkage * max(np.trace(cov) / d, 1e-12)
        cov = cov + ridge * np.eye(d)
        w = np.linalg.solve(cov, mu1 - mu0)
        pi1 = x1.shape[0] / n
        self.means = np.vstack([mu0, mu1])
        self.priors = np.array([1 - pi1, pi1])
        self.weights = w
        self.bias = float(-0.5 * (mu0 + mu1) @ w + np.log(pi1 / (1 - pi1)))
        return self

    def decision_function(self, x):
        return x @ self.weights + self.bias

    def predict_proba(self, x):
        return sigmoid(self.decision_function(x))

    def params(self) -> dict:
        return {"means": self.means.tolist(), "priors": self.priors.tolist(),
                "weights": self.weights.tolist(), "bias": self.bias}

    def load_params(self, doc: dict) -> None:
        self.means = np.asarray(doc["means"], dtype=np.float64)
        self.priors = np.asarray(doc["priors"], dtype=np.float64)
        self.weights = np.asarray(doc["weights"], dtype=np.float64)
        self.bias = float(doc["bias"])


class KNeighborsClassifier:
    """Euclidean k-NN; probability is the malicious share of the k neighbours.

    Equal distances are broken by training-row order.
    """

    algorithm = "KNN"
    chunk = 256

    def __init__(self, k: int = 5):
        if int(k) < 1:
            raise ContractViolation("k must be positive")
        self.k = int(k)
        self.x = np.zeros((0, 0))
        self.y = np.zeros(0)

    def fit(self, x, y, rng: RngStream | None = None):
        self.x = np.array(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self._sq = np.einsum("ij,ij->i", self.x, self.x)
        return self

    def neighbors(self, q) -> np.ndarray:
        k = min(self.k, self.x.shape[0])
        out = np.empty((q.shape[0], k), dtype=np.int64)
        for s in range(0, q.shape[0], self.chunk):
            block = q[s:s + self.chunk]
            d2 = self._sq[None, :] - 2.0 * block @ self.x.T + np.einsum("ij,ij->i", block, block)[:, None]
            if k < d2.shape[1]:
                part = np.argpartition(d2, k - 1, axis=1)[:, :k]
                kth = np.take_along_axis(d2, part, axis=1).max(axis=1)
                # rows tied with the k-th distance: resolve by index via a stable sort
                for i in range(block.shape[0]):
                    cand = np.flatnonzero(d2[i] <= kth[i])
                    if cand.size > k:
                        order = np.argsort(d2[i, cand], kind="stable")[:k]
                        out[s + i] = cand[order]
                    else:
                        out[s + i] = cand[np.argsort(d2[i, cand], kind="stable")]
            else:
                out[s:s + block.shape[0]] = np.argsort(d2, axis=1, kind="stable")[:, :k]
        return out

    def predict_proba(self, x):
        return self.y[self.neighbors(np.asarray(x, dtype=np.float64))].mean(axis=1)

    def params(self) -> dict:
        return {"k": self.k, "x": self.x.tolist(), "y": self.y.tolist()}

    def load_params(self, doc: dict) -> None:
        self.k = int(doc["k"])
        self.fit(np.asarray(doc["x"], dtype=np.float64).reshape(len(doc["y"]), -1),
                 np.asarray(doc["y"], dtype=np.float64))
