"""Graph-aware smoothing of prediction matrices.

The central recurrence is

    F(t) = (1 - lam) * F(0) + lam * K @ F(t-1)

where K is a realized kernel.  The default K is the symmetrically
normalized adjacency, which keeps iterates bounded and has the fixed
point (I - lam*S)^{-1} (1-lam) F(0); the combinatorial Laplacian can be
requested instead for the literal gradient-iteration form.

``closed_form_solve`` inverts (I + lam*L) densely and exists as the
convergence oracle for ``gradient_step``; it is guarded to small graphs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from graphstack.errors import ConfigError, DataError, ShapeError, SizeError
from graphstack.graph import Graph
from graphstack.kernels import KernelSpec, SparseOperator, build_kernel

MAX_PROPAGATION_STEPS = 200
DENSE_SOLVE_GUARD = 2000


class PredictionFrame:
    """Per-node prediction matrix for one model at one smoothing depth.

    ``values`` is (n, c): c = 1 for regression, c = num_classes for
    classification probabilities.  Probability frames are validated (rows
    sum to 1 within 1e-6) only at depth 0; smoothing is linear and may
    break exact normalization, so deeper frames are not renormalized.
    """

    __slots__ = ("values", "depth", "model_tag", "probability")

    def __init__(self, values, depth: int = 0, model_tag: str = "",
                 probability: bool = False):
        values = np.array(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ShapeError("prediction values must be a (n, c) matrix")
        if not np.isfinite(values).all():
            raise DataError(f"non-finite prediction values (tag={model_tag!r})")
        if probability and depth == 0:
            sums = values.sum(axis=1)
            if np.any(np.abs(sums - 1.0) > 1e-6) or np.any(values < -1e-12):
                raise DataError(
                    f"probability rows must be nonnegative and sum to 1 "
                    f"(tag={model_tag!r})")
        values.setflags(write=False)
        self.values = values
        self.depth = int(depth)
        self.model_tag = model_tag
        self.probability = bool(probability)

    @property
    def num_rows(self) -> int:
        return self.values.shape[0]

    @property
    def num_columns(self) -> int:
        return self.values.shape[1]

    def with_values(self, values, depth=None) -> "PredictionFrame":
        return PredictionFrame(values,
                               depth=self.depth if depth is None else depth,
                               model_tag=self.model_tag,
                               probability=self.probability)

    def as_probabilities(self) -> np.ndarray:
        """Clamp to [0, 1] and renormalize rows; for metric consumption only."""
        p = np.clip(self.values, 0.0, 1.0)
        sums = p.sum(axis=1, keepdims=True)
        uniform = 1.0 / p.shape[1]
        return np.where(sums > 0.0, p / np.where(sums > 0.0, sums, 1.0), uniform)


@dataclass(frozen=True)
class PropagationConfig:
    """Smoothing hyperparameters: trade-off weight, depth, step size, kernel."""

    lam: float = 0.9
    num_steps: int = 0
    step_size: float = 1.0
    kernel: KernelSpec = field(default_factory=KernelSpec)

    def __post_init__(self):
        if not (0.0 < self.lam < 1.0):
            raise ConfigError(f"lambda must lie strictly in (0, 1), got {self.lam}")
        if not (0 <= self.num_steps <= MAX_PROPAGATION_STEPS):
            raise ConfigError(
                f"num_steps must be in [0, {MAX_PROPAGATION_STEPS}], "
                f"got {self.num_steps}")
        if self.step_size <= 0:
            raise ConfigError("step_size must be positive")


def propagate(frame: PredictionFrame, op: SparseOperator,
              cfg: PropagationConfig) -> list[PredictionFrame]:
    """Run the smoothing recurrence; returns frames at depths 0..num_steps.

    Frame 0 is the input object unchanged.  The per-row reduction order
    inside the kernel is fixed, so results are bit-identical across runs
    and thread counts.
    """
    if frame.depth != 0:
        raise ConfigError("propagate expects a depth-0 input frame")
    if op.num_nodes != frame.num_rows:
        raise ShapeError(
            f"operator covers {op.num_nodes} nodes, frame has "
            f"{frame.num_rows} rows")
    frames = [frame]
    base = (1.0 - cfg.lam) * frame.values
    current = frame.values
    for t in range(1, cfg.num_steps + 1):
        current = base + cfg.lam * op.apply(current)
        frames.append(frame.with_values(current, depth=t))
    return frames


def gradient_step(values: np.ndarray, target: np.ndarray,
                  laplacian: SparseOperator, lam: float,
                  step_size: float) -> np.ndarray:
    """One descent step Y - alpha * [(lam*L + I) Y - target].

    ``laplacian`` must be a combinatorial-Laplacian operator; the step
    descends the quadratic whose unique minimizer is
    ``closed_form_solve``'s (I + lam*L)^{-1} target.
    """
    if laplacian.spec.kind != "combinatorial_laplacian":
        raise ConfigError("gradient_step requires a combinatorial_laplacian kernel")
    values = np.asarray(values, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if values.shape != target.shape:
        raise ShapeError(f"shape mismatch: {values.shape} vs {target.shape}")
    grad = lam * laplacian.apply(values) + values - target
    return values - step_size * grad


def closed_form_solve(target: np.ndarray, graph: Graph, lam: float) -> np.ndarray:
    """Exact smoothing minimizer (I + lam*L)^{-1} @ target, densely.

    Test oracle only; refuses graphs above the dense guard.
    """
    if graph.num_nodes > DENSE_SOLVE_GUARD:
        raise SizeError(
            f"dense solve limited to {DENSE_SOLVE_GUARD} nodes, "
            f"graph has {graph.num_nodes}")
    target = np.asarray(target, dtype=np.float64)
    lap = build_kernel(graph, KernelSpec(kind="combinatorial_laplacian"))
    system = np.eye(graph.num_nodes) + lam * lap.to_dense()
    return np.linalg.solve(system, target)


def energy(values: np.ndarray, target: np.ndarray, graph: Graph,
           lam: float) -> float:
    """Smoothing energy (1-lam) * ||Y - target||_F^2 + lam * tr(Y^T L Y)."""
    values = np.asarray(values, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if values.shape != target.shape:
        raise ShapeError(f"shape mismatch: {values.shape} vs {target.shape}")
    lap = build_kernel(graph, KernelSpec(kind="combinatorial_laplacian"))
    fit = float(np.sum((values - target) ** 2))
    smooth = float(np.sum(values * lap.apply(values)))
    return (1.0 - lam) * fit + lam * smooth


def laplacian_lambda_max(graph: Graph) -> float:
    """Largest eigenvalue of the combinatorial Laplacian (dense; guarded).

    Used to pick stable step sizes: the gradient iteration contracts for
    step_size < 2 / (1 + lam * lambda_max).
    """
    if graph.num_nodes > DENSE_SOLVE_GUARD:
        raise SizeError("dense eigensolve limited to small graphs")
    if graph.num_nodes == 0:
        return 0.0
    lap = build_kernel(graph, KernelSpec(kind="combinatorial_laplacian"))
    return float(np.linalg.eigvalsh(lap.to_dense())[-1])
