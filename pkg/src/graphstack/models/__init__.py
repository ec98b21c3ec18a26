"""Base-model zoo: specs, training dispatch, rosters, serialization.

Each family is a self-contained NumPy learner implementing
``fit(X, y, rng, ...)`` / ``raw_predict(X)``; ``train`` wraps them into a
:class:`TrainedModel` that yields :class:`PredictionFrame` objects
(class-probability rows for classification, values for regression) and
is deterministic given the spec seed.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from graphstack.errors import ConfigError, DataError
from graphstack.models.container import read_container, write_container
from graphstack.models.encoding import EncoderState, encode_features
from graphstack.models.gbdt import GBDTModel
from graphstack.models.knn import KNNModel
from graphstack.models.linear import LogisticModel, RidgeModel
from graphstack.models.mlp import MLPModel
from graphstack.propagation import PredictionFrame

FAMILIES = ("ridge_linear", "logistic_linear", "knn", "gbdt", "mlp")

_FAMILY_CLASSES = {
    "ridge_linear": RidgeModel,
    "logistic_linear": LogisticModel,
    "knn": KNNModel,
    "gbdt": GBDTModel,
    "mlp": MLPModel,
}

_REGRESSION_ONLY = {"ridge_linear"}
_CLASSIFICATION_ONLY = {"logistic_linear"}


@dataclass(frozen=True)
class ModelSpec:
    """One base learner: family, family-specific hyperparameters, seed."""

    family: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}")
        # constructing the learner validates the hyperparameters
        _FAMILY_CLASSES[self.family](**self.hyperparameters)

    def with_seed(self, seed: int) -> "ModelSpec":
        return ModelSpec(self.family, dict(self.hyperparameters), int(seed))

    def to_dict(self):
        return {"family": self.family,
                "hyperparameters": dict(self.hyperparameters),
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(d["family"], dict(d.get("hyperparameters", {})),
                   int(d.get("seed", 0)))


class _ConstantModel:
    """Fallback predictor for degenerate training targets."""

    family = "constant"

    def __init__(self, value=None):
        self.value = None if value is None else np.asarray(value, dtype=np.float64)

    def fit_constant(self, value):
        self.value = np.asarray(value, dtype=np.float64)
        return self

    def raw_predict(self, X):
        return np.tile(self.value, (X.shape[0], 1))

    def arrays(self):
        return {"value": self.value}

    def meta(self):
        return {}

    @classmethod
    def from_arrays(cls, meta, arrays):
        return cls(arrays["value"])


class TrainedModel:
    """Immutable fitted learner with a uniform prediction surface."""

    __slots__ = ("spec", "task", "num_classes", "inner", "warnings",
                 "training_ids")

    def __init__(self, spec, task, num_classes, inner, warnings=(),
                 training_ids=None):
        self.spec = spec
        self.task = task
        self.num_classes = int(num_classes)
        self.inner = inner
        self.warnings = tuple(warnings)
        self.training_ids = (None if training_ids is None
                             else np.asarray(training_ids, dtype=np.int64))

    def predict(self, X, model_tag="") -> PredictionFrame:
        X = np.asarray(X, dtype=np.float64)
        values = self.inner.raw_predict(X)
        if values.ndim == 1:
            values = values[:, None]
        return PredictionFrame(values, depth=0, model_tag=model_tag,
                               probability=self.task == "classification")

    def save(self, fh) -> None:
        meta = {
            "kind": "trained_model",
            "spec": self.spec.to_dict(),
            "task": self.task,
            "num_classes": self.num_classes,
            "inner_family": self.inner.family,
            "inner_meta": self.inner.meta(),
            "warnings": list(self.warnings),
            "has_training_ids": self.training_ids is not None,
        }
        arrays = {f"p_{k}": v for k, v in self.inner.arrays().items()}
        if self.training_ids is not None:
            arrays["training_ids"] = self.training_ids
        write_container(fh, meta, arrays)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.save(buf)
        return buf.getvalue()

    @classmethod
    def load(cls, fh) -> "TrainedModel":
        meta, arrays = read_container(fh)
        params = {k[2:]: v for k, v in arrays.items() if k.startswith("p_")}
        inner_cls = (_ConstantModel if meta["inner_family"] == "constant"
                     else _FAMILY_CLASSES[meta["inner_family"]])
        inner = inner_cls.from_arrays(meta["inner_meta"], params)
        return cls(ModelSpec.from_dict(meta["spec"]), meta["task"],
                   meta["num_classes"], inner, meta["warnings"],
                   arrays.get("training_ids"))

    @classmethod
    def from_bytes(cls, blob: bytes) -> "TrainedModel":
        return cls.load(io.BytesIO(blob))


def train(spec: ModelSpec, X, y, task: str, num_classes: int = 1,
          training_ids=None) -> TrainedModel:
    """Fit one model copy; deterministic given ``spec.seed``.

    Degenerate targets (a single class present, or an empty feature
    matrix for classifiers) fall back to a constant predictor with a
    warning recorded on the result rather than an error.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.shape[0] != y.shape[0]:
        raise DataError("feature matrix and target length differ")
    if X.shape[0] == 0:
        raise DataError("cannot train on an empty row set")
    if task == "regression" and spec.family in _CLASSIFICATION_ONLY:
        raise ConfigError(f"{spec.family} does not support regression")
    if task == "classification" and spec.family in _REGRESSION_ONLY:
        raise ConfigError(f"{spec.family} does not support classification")

    warnings = []
    rng = np.random.default_rng(spec.seed)
    if task == "classification":
        y = y.astype(np.int64)
        present = np.unique(y)
        if present.size < 2:
            value = np.zeros(num_classes)
            value[int(present[0])] = 1.0
            warnings.append(
                f"degenerate training set (single class {int(present[0])}); "
                "constant predictor substituted")
            inner = _ConstantModel().fit_constant(value)
            return TrainedModel(spec, task, num_classes, inner, warnings,
                                training_ids)
    else:
        y = y.astype(np.float64)

    inner = _FAMILY_CLASSES[spec.family](**spec.hyperparameters)
    if spec.family in ("ridge_linear", "logistic_linear"):
        if task == "classification":
            onehot = np.zeros((y.shape[0], num_classes))
            onehot[np.arange(y.shape[0]), y] = 1.0
            inner.fit(X, onehot, rng)
        else:
            inner.fit(X, y, rng)
    else:
        inner.fit(X, y, rng, task=task, num_classes=num_classes)
    return TrainedModel(spec, task, num_classes, inner, warnings, training_ids)


def list_layer_models(layer_index: int, task: str, override=None):
    """Default model roster for one stacking layer.

    Layer 0 carries the tabular encoders (boosted trees, MLP, a linear
    model); deeper layers add KNN, which works well on prediction-style
    features.  ``override`` (a list of spec dicts or ModelSpec) is
    returned verbatim.
    """
    if layer_index < 0:
        raise ConfigError("layer_index must be >= 0")
    if override is not None:
        return [m if isinstance(m, ModelSpec) else ModelSpec.from_dict(m)
                for m in override]
    linear = "ridge_linear" if task == "regression" else "logistic_linear"
    roster = [ModelSpec("gbdt"), ModelSpec("mlp"), ModelSpec(linear)]
    if layer_index >= 1:
        roster.append(ModelSpec("knn"))
    return roster


__all__ = [
    "FAMILIES",
    "EncoderState",
    "ModelSpec",
    "TrainedModel",
    "encode_features",
    "list_layer_models",
    "train",
]
