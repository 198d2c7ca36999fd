"""Histogram-split decision trees and the ensembles built on them
(random forest, bagging, gradient boosting with logistic loss)."""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolation
from ..numerics import RngStream
from .mlp import sigmoid

MAX_BINS = 255


def candidate_thresholds(x: np.ndarray, max_bins: int = MAX_BINS) -> list[np.ndarray]:
    """Per-feature split thresholds.

    Few distinct values: midpoints between neighbours. Otherwise quantiles of
    the data, used as ``x <= t`` cut points.
    """
    out = []
    for j in range(x.shape[1]):
        u = np.unique(x[:, j])
        if u.size <= max_bins:
            out.append((u[:-1] + u[1:]) / 2.0)
        else:
            q = np.quantile(x[:, j], np.linspace(0, 1, max_bins + 1)[1:-1], method="lower")
            out.append(np.unique(q))
    return out


def bin_features(x: np.ndarray, thresholds: list[np.ndarray]) -> np.ndarray:
    """Bin index ``k`` means ``x <= thresholds[k]`` and ``x > thresholds[k-1]``."""
    xb = np.empty(x.shape, dtype=np.int32)
    for j, t in enumerate(thresholds):
        xb[:, j] = np.searchsorted(t, x[:, j], side="left")
    return xb


class Tree:
    """Flat-array binary tree; ``feature == -1`` marks a leaf."""

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _add(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        return len(self.value) - 1

    def finalize(self) -> "Tree":
        self._f = np.asarray(self.feature, dtype=np.int64)
        self._t = np.asarray(self.threshold, dtype=np.float64)
        self._l = np.asarray(self.left, dtype=np.int64)
        self._r = np.asarray(self.right, dtype=np.int64)
        self._v = np.asarray(self.value, dtype=np.float64)
        return self

    @property
    def n_nodes(self) -> int:
        return len(self.value)

    def depth(self, node: int = 0) -> int:
        if self.feature[node] < 0:
            return 0
        return 1 + max(self.depth(self.left[node]), self.depth(self.right[node]))

    def predict(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=np.int64)
        rows = np.arange(x.shape[0])
        while True:
            f = self._f[node]
            active = f >= 0
            if not active.any():
                break
            r, n, fa = rows[active], node[active], f[active]
            go_left = x[r, fa] <= self._t[n]
            node[active] = np.where(go_left, self._l[n], self._r[n])
        return self._v[node]

    def to_dict(self, node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"value": self.value[node]}
        return {
            "feature": self.feature[node],
            "threshold": self.threshold[node],
            "value": self.value[node],
            "left": self.to_dict(self.left[node]),
            "right": self.to_dict(self.right[node]),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Tree":
        tree = cls()

        def walk(d):
            k = tree._add(d["value"])
            if "feature" in d:
                tree.feature[k] = int(d["feature"])
                tree.threshold[k] = float(d["threshold"])
                tree.left[k] = walk(d["left"])
                tree.right[k] = walk(d["right"])
            return k

        # iterative depth is bounded by max_depth, recursion is fine here
        walk(doc)
        return tree.finalize()


def build_tree(
    xb: np.ndarray,
    thresholds: list[np.ndarray],
    target: np.ndarray,
    idx: np.ndarray,
    *,
    criterion: str,
    max_depth: int,
    min_samples_leaf: int = 1,
    max_features: int | None = None,
    rng: RngStream | None = None,
    leaf_value=None,
) -> Tree:
    """Grow a tree on binned features.

    ``criterion`` is ``"gini"`` (target in {0,1}) or ``"mse"``. ``idx`` may
    repeat rows (bootstrap). ``leaf_value(idx)`` overrides the mean target.
    """
    if criterion not in ("gini", "mse"):
        raise ContractViolation(f"unknown criterion {criterion!r}")
    n_feat = xb.shape[1]
    n_bins = np.array([t.size + 1 for t in thresholds])
    width = int(n_bins.max())
    tree = Tree()
    value_of = leaf_value or (lambda ix: float(target[ix].mean()))
    stack = [(idx, 0, tree._add(value_of(idx)))]
    while stack:
        ix, depth, node = stack.pop()
        n = ix.size
        if depth >= max_depth or n < 2 * min_samples_leaf:
            continue
        t_node = target[ix]
        s_tot = t_node.sum()
        if criterion == "gini" and (s_tot == 0 or s_tot == n):
            continue
        if criterion == "mse" and np.ptp(t_node) == 0:
            continue
        if max_features is not None and max_features < n_feat:
            feats = np.sort(rng.choice(n_feat, size=max_features, replace=False))
        else:
            feats = np.arange(n_feat)
        feats = feats[n_bins[feats] > 1]
        if feats.size == 0:
            continue
        flat = (xb[ix][:, feats] + (np.arange(feats.size) * width)).ravel()
        cnt = np.bincount(flat, minlength=feats.size * width).reshape(feats.size, width)
        sm = np.bincount(flat, weights=np.repeat(t_node, feats.size), minlength=feats.size * width)
        sm = sm.reshape(feats.size, width)
        n_l = np.cumsum(cnt, axis=1)[:, :-1].astype(np.float64)
        s_l = np.cumsum(sm, axis=1)[:, :-1]
        n_r = n - n_l
        s_r = s_tot - s_l
        valid = (n_l >= min_samples_leaf) & (n_r >= min_samples_leaf)
        valid &= np.arange(width - 1)[None, :] < (n_bins[feats] - 1)[:, None]
        if not valid.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            if criterion == "gini":
                # weighted child impurity (up to a factor of 2); lower is better
                cost = s_l * (n_l - s_l) / n_l + s_r * (n_r - s_r) / n_r
                parent = s_tot * (n - s_tot) / n
            else:
                cost = -(s_l ** 2 / n_l + s_r ** 2 / n_r)
                parent = -(s_tot ** 2 / n)
        cost = np.where(valid, cost, np.inf)
        best = int(np.argmin(cost))
        fi, k = divmod(best, width - 1)
        if not parent - cost[fi, k] > 1e-12 * max(1.0, abs(parent)):
            continue
        f = int(feats[fi])
        go_left = xb[ix, f] <= k
        left_ix, right_ix = ix[go_left], ix[~go_left]
        tree.feature[node] = f
        tree.threshold[node] = float(thresholds[f][k])
        tree.left[node] = tree._add(value_of(left_ix))
        tree.right[node] = tree._add(value_of(right_ix))
        stack.append((right_ix, depth + 1, tree.right[node]))
        stack.append((left_ix, depth + 1, tree.left[node]))
    return tree.finalize()


def _resolve_max_features(spec, d: int) -> int | None:
    if spec in (None, "all", "none"):
        return None
    if spec == "sqrt":
        return max(1, int(np.sqrt(d)))
    if spec == "log2":
        return max(1, int(np.log2(d)))
    if isinstance(spec, float) and 0 < spec <= 1:
        return max(1, int(spec * d))
    return int(spec)


class DecisionTreeClassifier:
    algorithm = "DT"

    def __init__(self, max_depth: int = 12, min_samples_leaf: int = 1, max_features=None):
        self.max_depth = int(max_depth)
        self.min_samples_leaf = int(min_samples_leaf)
        self.max_features = max_features
        self.tree: Tree | None = None

    def fit(self, x, y, rng: RngStream):
        thr = candidate_thresholds(x)
        xb = bin_features(x, thr)
        self.tree = build_tree(
            xb, thr, y.astype(np.float64), np.arange(x.shape[0]),
            criterion="gini", max_depth=self.max_depth,
            min_samples_leaf=self.min_samples_leaf,
            max_features=_resolve_max_features(self.max_features, x.shape[1]), rng=rng,
        )
        return self

    def predict_proba(self, x):
        return self.tree.predict(x)

    def params(self) -> dict:
        return {"tree": self.tree.to_dict()}

    def load_params(self, doc: dict) -> None:
        self.tree = Tree.from_dict(doc["tree"])


class TreeEnsembleClassifier:
    """Averaged-probability ensemble of Gini trees over (optional) bootstrap samples."""

    algorithm = "RF"

    def __init__(self, n_trees: int = 100, max_depth: int = 12, max_features="sqrt",
                 bootstrap: bool = True, min_samples_leaf: int = 1):
        if int(n_trees) < 1:
            raise ContractViolation("n_trees must be positive")
        self.n_trees = int(n_trees)
        self.max_depth = int(max_depth)
        self.max_features = max_features
        self.bootstrap = bool(bootstrap)
        self.min_samples_leaf = int(min_samples_leaf)
        self.trees: list[Tree] = []

    def fit(self, x, y, rng: RngStream):
        thr = candidate_thresholds(x)
        xb = bin_features(x, thr)
        yf = y.astype(np.float64)
        n = x.shape[0]
        mf = _resolve_max_features(self.max_features, x.shape[1])
        self.trees = []
        for t in range(self.n_trees):
            r = rng.child(t)
            idx = np.sort(r.integers(0, n, size=n)) if self.bootstrap else np.arange(n)
            self.trees.append(build_tree(
                xb, thr, yf, idx, criterion="gini", max_depth=self.max_depth,
                min_samples_leaf=self.min_samples_leaf, max_features=mf, rng=r,
            ))
        return self

    def predict_proba(self, x):
        return np.mean([t.predict(x) for t in self.trees], axis=0)

    def params(self) -> dict:
        return {"trees": [t.to_dict() for t in self.trees]}

    def load_params(self, doc: dict) -> None:
        self.trees = [Tree.from_dict(t) for t in doc["trees"]]


class RandomForestClassifier(TreeEnsembleClassifier):
    algorithm = "RF"


class BaggingClassifier(TreeEnsembleClassifier):
    algorithm = "Bagging"

    def __init__(self, n_trees: int = 10, max_depth: int = 12, max_features=None,
                 bootstrap: bool = True, min_samples_leaf: int = 1):
        super().__init__(n_trees, max_depth, max_features, bootstrap, min_samples_leaf)


class GradientBoostingClassifier:
    """Logistic-loss boosting of shallow regression trees with Newton leaf values."""

    algorithm = "GB"

    def __init__(self, n_estimators: int = 100, learning_rate: float = 0.1, max_depth: int = 1):
        if int(n_estimators) < 0:
            raise ContractViolation("n_estimators must be non-negative")
        self.n_estimators = int(n_estimators)
        self.learning_rate = float(learning_rate)
        self.max_depth = int(max_depth)
        self.init_score = 0.0
        self.trees: list[Tree] = []
        self.loss_history: list[float] = []

    @staticmethod
    def _loss(y, f):
        p = np.clip(sigmoid(f), 1e-7, 1 - 1e-7)
        return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))

    def fit(self, x, y, rng: RngStream):
        yf = y.astype(np.float64)
        prior = np.clip(yf.mean(), 1e-7, 1 - 1e-7)
        self.init_score = float(np.log(prior / (1 - prior)))
        f = np.full(yf.size, self.init_score)
        thr = candidate_thresholds(x)
        xb = bin_features(x, thr)
        idx = np.arange(yf.size)
        self.trees = []
        self.loss_history = [self._loss(yf, f)]
        for _ in range(self.n_estimators):
            p = sigmoid(f)
            resid = yf - p
            hess = np.maximum(p * (1 - p), 1e-12)

            def newton(ix, resid=resid, hess=hess):
                return float(resid[ix].sum() / hess[ix].sum())

            tree = build_tree(xb, thr, resid, idx, criterion="mse",
                              max_depth=self.max_depth, leaf_value=newton)
            self.trees.append(tree)
            f = f + self.learning_rate * tree.predict(x)
            self.loss_history.append(self._loss(yf, f))
        return self

    def decision_function(self, x):
        f = np.full(x.shape[0], self.init_score)
        for t in self.trees:
            f = f + self.learning_rate * t.predict(x)
        return f

    def predict_proba(self, x):
        return sigmoid(self.decision_function(x))

    def params(self) -> dict:
        return {"init_score": self.init_score, "trees": [t.to_dict() for t in self.trees]}

    def load_params(self, doc: dict) -> None:
        self.init_score = float(doc["init_score"])
        self.trees = [Tree.from_dict(t) for t in doc["trees"]]
