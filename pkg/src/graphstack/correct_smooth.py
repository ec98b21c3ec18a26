"""Correct-and-smooth post-processing of final predictions.

Two optional phases over the same smoothing recurrence used elsewhere:

- correct: propagate the training residual (true minus predicted on
  labeled nodes, zero elsewhere) and add it back, scaled by a fixed
  factor or an autoscale heuristic;
- smooth: paste true labels over the labeled rows and propagate.

Omitting ``lam_smooth`` skips the smooth phase; disabling the correct
phase too makes the whole operation the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from graphstack.errors import ConfigError, ShapeError
from graphstack.graph import Graph
from graphstack.kernels import KernelSpec, build_kernel
from graphstack.propagation import PredictionFrame
from graphstack.tables import LabelTable


@dataclass(frozen=True)
class CSConfig:
    """Hyperparameters for the two phases.

    ``scale`` is either a positive number (fixed residual scale) or the
    string ``"autoscale"``.
    """

    lam_correct: float = 0.8
    kernel_correct: KernelSpec = field(default_factory=lambda: KernelSpec("DA"))
    lam_smooth: float | None = 0.5
    kernel_smooth: KernelSpec = field(default_factory=lambda: KernelSpec("DA"))
    num_propagation: int = 5
    scale: float | str = 1.0
    correct_enabled: bool = True

    def __post_init__(self):
        if not (0.0 < self.lam_correct <= 1.0):
            raise ConfigError("lam_correct must lie in (0, 1]")
        if self.lam_smooth is not None and not (0.0 < self.lam_smooth <= 1.0):
            raise ConfigError("lam_smooth must lie in (0, 1] or be omitted")
        if self.num_propagation < 1:
            raise ConfigError("num_propagation must be >= 1")
        if isinstance(self.scale, str):
            if self.scale != "autoscale":
                raise ConfigError(f"unknown scale mode {self.scale!r}")
        elif not self.scale > 0:
            raise ConfigError("fixed scale must be positive")

    def to_dict(self):
        return {
            "lam_correct": self.lam_correct,
            "kernel_correct": {"kind": self.kernel_correct.kind,
                               "isolated_node_policy":
                                   self.kernel_correct.isolated_node_policy},
            "lam_smooth": self.lam_smooth,
            "kernel_smooth": {"kind": self.kernel_smooth.kind,
                              "isolated_node_policy":
                                  self.kernel_smooth.isolated_node_policy},
            "num_propagation": self.num_propagation,
            "scale": self.scale,
            "correct_enabled": self.correct_enabled,
        }

    @classmethod
    def from_dict(cls, d):
        def kernel(key):
            k = d.get(key, {})
            return KernelSpec(kind=k.get("kind", "DA"),
                              isolated_node_policy=k.get("isolated_node_policy",
                                                         "identity_row"))
        return cls(lam_correct=d.get("lam_correct", 0.8),
                   kernel_correct=kernel("kernel_correct"),
                   lam_smooth=d.get("lam_smooth"),
                   kernel_smooth=kernel("kernel_smooth"),
                   num_propagation=d.get("num_propagation", 5),
                   scale=d.get("scale", 1.0),
                   correct_enabled=d.get("correct_enabled", True))


def _iterate(base, values, lam, operator, steps):
    current = values
    scaled = (1.0 - lam) * base
    for _ in range(steps):
        current = scaled + lam * operator.apply(current)
    return current


def correct_and_smooth(preds: PredictionFrame, labels: LabelTable,
                       graph: Graph, cfg: CSConfig,
                       warnings: list | None = None) -> PredictionFrame:
    """Apply the configured phases to a full-graph prediction frame."""
    if preds.num_rows != graph.num_nodes:
        raise ShapeError("prediction frame must cover all graph nodes")
    if labels.num_rows != graph.num_nodes:
        raise ShapeError("label table must cover all graph nodes")
    if not cfg.correct_enabled and cfg.lam_smooth is None:
        return preds
    labeled = labels.labeled_ids
    truth = labels.target_matrix(labeled)
    values = np.array(preds.values)

    if cfg.correct_enabled:
        residual = np.zeros_like(values)
        residual[labeled] = truth - values[labeled]
        operator = build_kernel(graph, cfg.kernel_correct)
        smoothed = _iterate(residual, residual, cfg.lam_correct, operator,
                            cfg.num_propagation)
        if cfg.scale == "autoscale":
            unlabeled = labels.unlabeled_ids
            numerator = float(np.abs(residual[labeled]).sum())
            denom = labeled.shape[0] * float(
                np.abs(smoothed[unlabeled]).mean()) if unlabeled.size else 0.0
            if denom > 0:
                gamma = numerator / denom
            else:
                gamma = 1.0
                if warnings is not None:
                    warnings.append(
                        "autoscale denominator was zero; using scale 1.0")
        else:
            gamma = float(cfg.scale)
        values = values + gamma * smoothed

    if cfg.lam_smooth is not None:
        pasted = values.copy()
        pasted[labeled] = truth
        operator = build_kernel(graph, cfg.kernel_smooth)
        values = _iterate(pasted, pasted, cfg.lam_smooth, operator,
                          cfg.num_propagation)

    return PredictionFrame(values, depth=0, model_tag=preds.model_tag,
                           probability=False)
