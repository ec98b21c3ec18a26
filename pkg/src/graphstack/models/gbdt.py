"""Gradient boosted decision trees (Newton boosting, exact split scan).

Regression boosts squared loss; classification boosts softmax
cross-entropy with one tree per class per round.  Split search scans
every distinct threshold of every feature through the backend
``split_scan`` kernel, so training is deterministic: ties prefer the
earlier position and the lower feature index.
"""

from __future__ import annotations

import numpy as np

from graphstack.backend import split_scan
from graphstack.errors import ConfigError
from graphstack.models.linear import softmax

MIN_SPLIT_GAIN = 1e-12


class _Tree:
    """Flat-array binary tree: internal nodes carry (feature, threshold)."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []

    def add_leaf(self, value):
        self._push(-1, 0.0, -1, -1, value)
        return len(self.value) - 1

    def add_split(self, feature, threshold):
        self._push(feature, threshold, -1, -1, 0.0)
        return len(self.value) - 1

    def _push(self, f, t, l, r, v):
        self.feature.append(f)
        self.threshold.append(t)
        self.left.append(l)
        self.right.append(r)
        self.value.append(v)

    def predict(self, X):
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        value = np.asarray(self.value)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            goes_left = X[rows, feature[cur]] < threshold[cur]
            node[rows] = np.where(goes_left, left[cur], right[cur])
            active = feature[node] >= 0
        return value[node]

    def pack(self):
        return np.stack([
            np.asarray(self.feature, dtype=np.float64),
            np.asarray(self.threshold, dtype=np.float64),
            np.asarray(self.left, dtype=np.float64),
            np.asarray(self.right, dtype=np.float64),
            np.asarray(self.value, dtype=np.float64),
        ])

    @classmethod
    def unpack(cls, arr):
        t = cls()
        t.feature = [int(v) for v in arr[0]]
        t.threshold = list(arr[1])
        t.left = [int(v) for v in arr[2]]
        t.right = [int(v) for v in arr[3]]
        t.value = list(arr[4])
        return t


def _grow(tree, X, grad, hess, rows, depth, max_depth, min_leaf, reg_lambda):
    g_sum = float(grad[rows].sum())
    h_sum = float(hess[rows].sum())
    if depth >= max_depth or rows.shape[0] < 2 * min_leaf:
        return tree.add_leaf(-g_sum / (h_sum + reg_lambda))
    best = None  # (gain, feature, threshold, order, pos)
    for f in range(X.shape[1]):
        vals = X[rows, f]
        order = np.argsort(vals, kind="stable")
        gain, pos = split_scan(np.ascontiguousarray(vals[order]),
                               np.ascontiguousarray(grad[rows][order]),
                               np.ascontiguousarray(hess[rows][order]),
                               min_leaf, reg_lambda)
        if pos > 0 and gain > MIN_SPLIT_GAIN and (best is None or gain > best[0]):
            v = vals[order]
            best = (gain, f, 0.5 * (v[pos - 1] + v[pos]), order, pos)
    if best is None:
        return tree.add_leaf(-g_sum / (h_sum + reg_lambda))
    _, f, thr, order, pos = best
    node = tree.add_split(f, thr)
    left_rows = rows[order[:pos]]
    right_rows = rows[order[pos:]]
    tree.left[node] = _grow(tree, X, grad, hess, left_rows, depth + 1,
                            max_depth, min_leaf, reg_lambda)
    tree.right[node] = _grow(tree, X, grad, hess, right_rows, depth + 1,
                             max_depth, min_leaf, reg_lambda)
    return node


class GBDTModel:
    """Boosted trees; ``num_outputs`` trees per round for classification."""

    family = "gbdt"

    def __init__(self, num_trees=200, max_depth=3, learning_rate=0.1,
                 min_samples_leaf=1, reg_lambda=1e-3):
        if num_trees < 1:
            raise ConfigError("gbdt needs num_trees >= 1")
        if not (0.0 < learning_rate <= 1.0):
            raise ConfigError("gbdt learning_rate must lie in (0, 1]")
        if max_depth < 1 or min_samples_leaf < 1 or reg_lambda < 0:
            raise ConfigError("invalid gbdt hyperparameters")
        self.num_trees = int(num_trees)
        self.max_depth = int(max_depth)
        self.learning_rate = float(learning_rate)
        self.min_samples_leaf = int(min_samples_leaf)
        self.reg_lambda = float(reg_lambda)
        self.task = None
        self.base_score = None
        self.trees = []  # regression: [tree]; classification: [[tree]*c]
        self.train_losses = []

    def fit(self, X, y, rng, task="regression", num_classes=1):
        self.task = task
        X = np.ascontiguousarray(X, dtype=np.float64)
        if task == "regression":
            self._fit_regression(X, np.asarray(y, dtype=np.float64))
        else:
            self._fit_classification(X, np.asarray(y, dtype=np.int64),
                                     num_classes)
        return self

    def _fit_regression(self, X, y):
        self.base_score = np.array([y.mean()])
        pred = np.full(y.shape[0], self.base_score[0])
        all_rows = np.arange(y.shape[0], dtype=np.int64)
        hess = np.ones(y.shape[0])
        for _ in range(self.num_trees):
            grad = pred - y
            tree = _Tree()
            _grow(tree, X, grad, hess, all_rows, 0, self.max_depth,
                  self.min_samples_leaf, self.reg_lambda)
            pred = pred + self.learning_rate * tree.predict(X)
            self.trees.append(tree)
            self.train_losses.append(float(np.mean((pred - y) ** 2)))

    def _fit_classification(self, X, y, num_classes):
        n = y.shape[0]
        onehot = np.zeros((n, num_classes))
        onehot[np.arange(n), y] = 1.0
        prior = np.clip(onehot.mean(axis=0), 1e-12, None)
        self.base_score = np.log(prior)
        scores = np.tile(self.base_score, (n, 1))
        all_rows = np.arange(n, dtype=np.int64)
        for _ in range(self.num_trees):
            probs = softmax(scores)
            round_trees = []
            for c in range(num_classes):
                grad = probs[:, c] - onehot[:, c]
                hess = np.maximum(probs[:, c] * (1.0 - probs[:, c]), 1e-12)
                tree = _Tree()
                _grow(tree, X, grad, hess, all_rows, 0, self.max_depth,
                      self.min_samples_leaf, self.reg_lambda)
                round_trees.append(tree)
            for c, tree in enumerate(round_trees):
                scores[:, c] += self.learning_rate * tree.predict(X)
            self.trees.append(round_trees)
            probs = softmax(scores)
            self.train_losses.append(float(
                -np.mean(np.log(np.clip(probs[np.arange(n), y], 1e-12, None)))))

    def raw_predict(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        if self.task == "regression":
            pred = np.full(X.shape[0], self.base_score[0])
            for tree in self.trees:
                pred = pred + self.learning_rate * tree.predict(X)
            return pred[:, None]
        scores = np.tile(self.base_score, (X.shape[0], 1))
        for round_trees in self.trees:
            for c, tree in enumerate(round_trees):
                scores[:, c] += self.learning_rate * tree.predict(X)
        return softmax(scores)

    def arrays(self):
        out = {"base_score": self.base_score,
               "train_losses": np.asarray(self.train_losses)}
        if self.task == "regression":
            for i, tree in enumerate(self.trees):
                out[f"tree_{i}"] = tree.pack()
        else:
            for i, round_trees in enumerate(self.trees):
                for c, tree in enumerate(round_trees):
                    out[f"tree_{i}_{c}"] = tree.pack()
        return out

    def meta(self):
        return {"num_trees": self.num_trees, "max_depth": self.max_depth,
                "learning_rate": self.learning_rate,
                "min_samples_leaf": self.min_samples_leaf,
                "reg_lambda": self.reg_lambda, "task": self.task,
                "rounds": len(self.trees),
                "num_outputs": (1 if self.task == "regression"
                                else len(self.trees[0]) if self.trees else 0)}

    @classmethod
    def from_arrays(cls, meta, arrays):
        m = cls(num_trees=meta["num_trees"], max_depth=meta["max_depth"],
                learning_rate=meta["learning_rate"],
                min_samples_leaf=meta["min_samples_leaf"],
                reg_lambda=meta["reg_lambda"])
        m.task = meta["task"]
        m.base_score = arrays["base_score"]
        m.train_losses = list(arrays["train_losses"])
        if m.task == "regression":
            m.trees = [_Tree.unpack(arrays[f"tree_{i}"])
                       for i in range(meta["rounds"])]
        else:
            m.trees = [[_Tree.unpack(arrays[f"tree_{i}_{c}"])
                        for c in range(meta["num_outputs"])]
                       for i in range(meta["rounds"])]
        return m
