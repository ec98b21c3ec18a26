"""Greedy forward ensemble selection with replacement.

Starting from the single best model, each round re-adds whichever model
minimizes the loss of the running average, accepting the round only if
the loss does not increase; this makes the ensemble literally never
worse than the best single model on the selection set.  Weights are
selection counts over total selections, so every weight is an integer
multiple of 1/iterations.  Ties break on the lexicographically smallest
model tag, making the result independent of map insertion order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from graphstack.errors import ConfigError, DataError

LOSSES = ("mse", "log_loss")


@dataclass(frozen=True)
class EnsembleWeights:
    """Nonnegative model weights summing to one, in 1/iterations steps."""

    weights: dict
    iterations: int

    def blend(self, per_model: dict) -> np.ndarray:
        """Weighted sum of prediction matrices keyed like the weights."""
        out = None
        for tag in sorted(self.weights):
            w = self.weights[tag]
            if w == 0.0:
                continue
            term = w * np.asarray(per_model[tag], dtype=np.float64)
            out = term if out is None else out + term
        return out

    def to_dict(self):
        return {"weights": dict(self.weights), "iterations": self.iterations}


def _loss(kind: str, pred: np.ndarray, targets: np.ndarray) -> float:
    if kind == "mse":
        return float(np.mean((pred - targets) ** 2))
    # log loss over probability rows; targets are class indices
    p = np.clip(pred, 1e-12, None)
    p = p / p.sum(axis=1, keepdims=True)
    rows = np.arange(targets.shape[0])
    return float(-np.mean(np.log(p[rows, targets.astype(np.int64)])))


def select(per_model_preds: dict, targets, loss: str = "mse",
           iterations: int = 100) -> EnsembleWeights:
    """Fit ensemble weights on a selection set.

    ``per_model_preds`` maps model tag to an (n, c) prediction matrix;
    all matrices must share a shape.  ``targets`` is an (n, c) matrix
    for mse or an n-vector of class indices for log_loss.
    """
    if not per_model_preds:
        raise ConfigError("ensemble selection needs at least one model")
    if loss not in LOSSES:
        raise ConfigError(f"unknown selection loss {loss!r}")
    if iterations < 1:
        raise ConfigError("need at least one selection round")
    tags = sorted(per_model_preds)
    preds = {}
    shape = None
    for tag in tags:
        mat = np.asarray(per_model_preds[tag], dtype=np.float64)
        if not np.isfinite(mat).all():
            raise DataError(f"non-finite predictions for model {tag!r}")
        if shape is None:
            shape = mat.shape
        elif mat.shape != shape:
            raise ConfigError("prediction matrices must share a shape")
        preds[tag] = mat
    targets = np.asarray(targets)

    losses = {tag: _loss(loss, preds[tag], targets) for tag in tags}
    best_tag = min(tags, key=lambda t: losses[t])
    counts = {tag: 0 for tag in tags}
    counts[best_tag] = 1
    running_sum = preds[best_tag].copy()
    total = 1
    current_loss = losses[best_tag]

    for _ in range(iterations - 1):
        round_best, round_loss = None, None
        for tag in tags:
            cand = _loss(loss, (running_sum + preds[tag]) / (total + 1), targets)
            if round_loss is None or cand < round_loss:
                round_best, round_loss = tag, cand
        if round_loss > current_loss:
            break
        counts[round_best] += 1
        running_sum += preds[round_best]
        total += 1
        current_loss = round_loss

    weights = {tag: counts[tag] / total for tag in tags}
    return EnsembleWeights(weights, total)
