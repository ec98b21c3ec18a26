"""Brute-force k-nearest-neighbors learner.

Distance ties resolve to the lower training-row index (stable sort), so
predictions are deterministic.
"""

from __future__ import annotations

import numpy as np

from graphstack.errors import ConfigError


class KNNModel:

    family = "knn"

    def __init__(self, n_neighbors=5):
        if n_neighbors < 1:
            raise ConfigError("knn needs n_neighbors >= 1")
        self.n_neighbors = int(n_neighbors)
        self.task = None
        self.train_X = None
        self.train_y = None
        self.num_classes = 1

    def fit(self, X, y, rng, task="regression", num_classes=1):
        self.task = task
        self.train_X = np.asarray(X, dtype=np.float64)
        self.train_y = np.asarray(
            y, dtype=np.float64 if task == "regression" else np.int64)
        self.num_classes = int(num_classes)
        return self

    def raw_predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        k = min(self.n_neighbors, self.train_X.shape[0])
        # squared distances, chunked to bound memory
        out = np.empty((X.shape[0],
                        1 if self.task == "regression" else self.num_classes))
        train_sq = (self.train_X ** 2).sum(axis=1)
        for start in range(0, X.shape[0], 512):
            block = X[start:start + 512]
            d2 = ((block ** 2).sum(axis=1)[:, None] + train_sq[None, :]
                  - 2.0 * block @ self.train_X.T)
            order = np.argsort(d2, axis=1, kind="stable")[:, :k]
            if self.task == "regression":
                out[start:start + 512, 0] = self.train_y[order].mean(axis=1)
            else:
                votes = np.zeros((block.shape[0], self.num_classes))
                labels = self.train_y[order]
                for j in range(k):
                    votes[np.arange(block.shape[0]), labels[:, j]] += 1.0
                out[start:start + 512] = votes / k
        return out

    def arrays(self):
        return {"train_X": self.train_X,
                "train_y": np.asarray(self.train_y, dtype=np.float64)}

    def meta(self):
        return {"n_neighbors": self.n_neighbors, "task": self.task,
                "num_classes": self.num_classes}

    @classmethod
    def from_arrays(cls, meta, arrays):
        m = cls(n_neighbors=meta["n_neighbors"])
        m.task = meta["task"]
        m.num_classes = meta["num_classes"]
        m.train_X = arrays["train_X"]
        m.train_y = np.asarray(
            arrays["train_y"],
            dtype=np.float64 if m.task == "regression" else np.int64)
        return m
