"""Single-hidden-layer perceptron trained by full-batch gradient descent.

Deterministic given the seed: Gaussian init scaled by fan-in, a fixed
number of epochs, fixed step size, no shuffling.
"""

from __future__ import annotations

import numpy as np

from graphstack.errors import ConfigError
from graphstack.models.linear import softmax


class MLPModel:

    family = "mlp"

    def __init__(self, hidden=64, epochs=200, learning_rate=1e-2, l2=1e-4):
        if hidden < 1 or epochs < 1 or learning_rate <= 0 or l2 < 0:
            raise ConfigError("invalid mlp hyperparameters")
        self.hidden = int(hidden)
        self.epochs = int(epochs)
        self.learning_rate = float(learning_rate)
        self.l2 = float(l2)
        self.task = None
        self.params = None

    def fit(self, X, y, rng, task="regression", num_classes=1):
        self.task = task
        n, d = X.shape
        c = 1 if task == "regression" else num_classes
        if task == "regression":
            target = np.asarray(y, dtype=np.float64)[:, None]
        else:
            target = np.zeros((n, c))
            target[np.arange(n), np.asarray(y, dtype=np.int64)] = 1.0
        w1 = rng.standard_normal((d, self.hidden)) / np.sqrt(max(d, 1))
        b1 = np.zeros(self.hidden)
        w2 = rng.standard_normal((self.hidden, c)) / np.sqrt(self.hidden)
        b2 = np.zeros(c)
        lr = self.learning_rate
        for _ in range(self.epochs):
            h_pre = X @ w1 + b1
            h = np.maximum(h_pre, 0.0)
            out = h @ w2 + b2
            if task == "regression":
                delta = 2.0 * (out - target) / n
            else:
                delta = (softmax(out) - target) / n
            gw2 = h.T @ delta + self.l2 * w2
            gb2 = delta.sum(axis=0)
            dh = (delta @ w2.T) * (h_pre > 0.0)
            gw1 = X.T @ dh + self.l2 * w1
            gb1 = dh.sum(axis=0)
            w2 -= lr * gw2
            b2 -= lr * gb2
            w1 -= lr * gw1
            b1 -= lr * gb1
        self.params = {"w1": w1, "b1": b1, "w2": w2, "b2": b2}
        return self

    def raw_predict(self, X):
        p = self.params
        h = np.maximum(X @ p["w1"] + p["b1"], 0.0)
        out = h @ p["w2"] + p["b2"]
        return out if self.task == "regression" else softmax(out)

    def arrays(self):
        return dict(self.params)

    def meta(self):
        return {"hidden": self.hidden, "epochs": self.epochs,
                "learning_rate": self.learning_rate, "l2": self.l2,
                "task": self.task}

    @classmethod
    def from_arrays(cls, meta, arrays):
        m = cls(hidden=meta["hidden"], epochs=meta["epochs"],
                learning_rate=meta["learning_rate"], l2=meta["l2"])
        m.task = meta["task"]
        m.params = {k: arrays[k] for k in ("w1", "b1", "w2", "b2")}
        return m
