"""Linear base learners: ridge regression and multinomial logistic."""

from __future__ import annotations

import numpy as np

from graphstack.errors import ConfigError


class RidgeModel:
    """Least squares with L2 penalty on the weights (intercept free).

    ``alpha=0`` falls back to a pseudoinverse solve, so exact
    interpolation cases stay exact.  ``fixed_coef`` bypasses fitting and
    uses the given coefficient for every input column with zero
    intercept; the leakage lab uses this for fixed-weight linear
    functionals.
    """

    family = "ridge_linear"

    def __init__(self, alpha=1e-3, fixed_coef=None):
        if alpha < 0:
            raise ConfigError("ridge alpha must be >= 0")
        self.alpha = float(alpha)
        self.fixed_coef = None if fixed_coef is None else float(fixed_coef)
        self.coef = None
        self.intercept = None

    def fit(self, X, y, rng):
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        if self.fixed_coef is not None:
            self.coef = np.full((X.shape[1], y.shape[1]), self.fixed_coef)
            self.intercept = np.zeros(y.shape[1])
            return self
        x_mean = X.mean(axis=0)
        y_mean = y.mean(axis=0)
        Xc = X - x_mean
        yc = y - y_mean
        if X.shape[1] == 0:
            self.coef = np.zeros((0, y.shape[1]))
        elif self.alpha == 0.0:
            self.coef, *_ = np.linalg.lstsq(Xc, yc, rcond=None)
        else:
            gram = Xc.T @ Xc + self.alpha * np.eye(X.shape[1])
            self.coef = np.linalg.solve(gram, Xc.T @ yc)
        self.intercept = y_mean - x_mean @ self.coef
        return self

    def raw_predict(self, X):
        return X @ self.coef + self.intercept

    def arrays(self):
        return {"coef": self.coef, "intercept": self.intercept}

    def meta(self):
        return {"alpha": self.alpha, "fixed_coef": self.fixed_coef}

    @classmethod
    def from_arrays(cls, meta, arrays):
        m = cls(alpha=meta["alpha"], fixed_coef=meta["fixed_coef"])
        m.coef = arrays["coef"]
        m.intercept = arrays["intercept"]
        return m


class LogisticModel:
    """Multinomial logistic regression by full-batch gradient descent.

    Deterministic: zero initialization, fixed epoch count and step size.
    """

    family = "logistic_linear"

    def __init__(self, epochs=300, learning_rate=0.5, l2=1e-4):
        if epochs < 1 or learning_rate <= 0 or l2 < 0:
            raise ConfigError("invalid logistic hyperparameters")
        self.epochs = int(epochs)
        self.learning_rate = float(learning_rate)
        self.l2 = float(l2)
        self.weights = None
        self.bias = None

    def fit(self, X, y_onehot, rng):
        n, d = X.shape
        c = y_onehot.shape[1]
        self.weights = np.zeros((d, c))
        self.bias = np.zeros(c)
        for _ in range(self.epochs):
            probs = softmax(X @ self.weights + self.bias)
            grad = (probs - y_onehot) / n
            self.weights -= self.learning_rate * (X.T @ grad + self.l2 * self.weights)
            self.bias -= self.learning_rate * grad.sum(axis=0)
        return self

    def raw_predict(self, X):
        return softmax(X @ self.weights + self.bias)

    def arrays(self):
        return {"weights": self.weights, "bias": self.bias}

    def meta(self):
        return {"epochs": self.epochs, "learning_rate": self.learning_rate,
                "l2": self.l2}

    @classmethod
    def from_arrays(cls, meta, arrays):
        m = cls(epochs=meta["epochs"], learning_rate=meta["learning_rate"],
                l2=meta["l2"])
        m.weights = arrays["weights"]
        m.bias = arrays["bias"]
        return m


def softmax(scores):
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)
