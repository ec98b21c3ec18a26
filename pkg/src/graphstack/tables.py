"""Columnar feature and label containers for node data."""

from __future__ import annotations

import numpy as np

from graphstack.errors import ConfigError, DataError, ShapeError

COLUMN_KINDS = ("numeric", "categorical", "text")
TASKS = ("regression", "classification")


class FeatureTable:
    """Per-node features with typed columns (numeric, categorical, text).

    Numeric columns are float64 with NaN for missing values; categorical
    and text columns hold strings (empty string counts as a level / as
    empty text).  Categorical level vocabularies are indexed densely in
    sorted order at construction.
    """

    __slots__ = ("columns", "_values", "_levels", "num_rows")

    def __init__(self, columns, values, num_rows=None):
        self.columns = tuple((str(n), str(k)) for n, k in columns)
        names = [n for n, _ in self.columns]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate feature column names")
        self._values = {}
        self._levels = {}
        sizes = set()
        for name, kind in self.columns:
            if kind not in COLUMN_KINDS:
                raise ConfigError(f"unknown column kind {kind!r} for {name!r}")
            col = values[name]
            if kind == "numeric":
                col = np.asarray(col, dtype=np.float64)
            else:
                col = np.asarray([("" if v is None else str(v)) for v in col],
                                 dtype=object)
            sizes.add(col.shape[0])
            self._values[name] = col
            if kind == "categorical":
                self._levels[name] = tuple(sorted(set(col.tolist())))
        if num_rows is None:
            if not sizes:
                raise ConfigError("empty table needs an explicit num_rows")
            num_rows = sizes.pop() if len(sizes) == 1 else None
        if num_rows is None or (sizes and sizes != {num_rows}):
            raise ShapeError("all feature columns must have the same row count")
        self.num_rows = int(num_rows)

    @property
    def num_columns(self) -> int:
        return len(self.columns)

    def kind_of(self, name: str) -> str:
        for n, k in self.columns:
            if n == name:
                return k
        raise KeyError(name)

    def column(self, name: str) -> np.ndarray:
        return self._values[name]

    def levels(self, name: str) -> tuple:
        """Dense, sorted level vocabulary of a categorical column."""
        return self._levels[name]

    def with_numeric_block(self, names, matrix) -> "FeatureTable":
        """New table with extra numeric columns appended."""
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != self.num_rows:
            raise ShapeError("appended block must be (num_rows, len(names))")
        if matrix.shape[1] != len(names):
            raise ShapeError("column name count does not match block width")
        columns = list(self.columns) + [(n, "numeric") for n in names]
        values = dict(self._values)
        for j, n in enumerate(names):
            values[n] = matrix[:, j]
        return FeatureTable(columns, values, num_rows=self.num_rows)

    @classmethod
    def empty(cls, num_rows: int) -> "FeatureTable":
        return cls((), {}, num_rows=num_rows)


class LabelTable:
    """Node targets plus the mask of nodes whose labels may be trained on.

    ``values`` covers all nodes; entries outside ``known_mask`` are
    placeholders (NaN / -1).  ``labeled_mask`` marks the training set and
    must be a subset of ``known_mask`` (the rest of the known labels are
    reserved for evaluation).
    """

    __slots__ = ("task", "values", "num_classes", "labeled_mask", "known_mask")

    def __init__(self, task, values, labeled_mask, known_mask=None,
                 num_classes=None):
        if task not in TASKS:
            raise ConfigError(f"unknown task {task!r}")
        self.task = task
        labeled_mask = np.asarray(labeled_mask, dtype=bool)
        n = labeled_mask.shape[0]
        if task == "regression":
            values = np.asarray(values, dtype=np.float64)
            self.num_classes = 1
        else:
            values = np.asarray(values, dtype=np.int64)
            if num_classes is None:
                known = values[values >= 0]
                num_classes = int(known.max()) + 1 if known.size else 0
            self.num_classes = int(num_classes)
        if values.shape != (n,):
            raise ShapeError("labels must be a vector matching the mask length")
        if known_mask is None:
            if task == "regression":
                known_mask = np.isfinite(values)
            else:
                known_mask = values >= 0
        known_mask = np.asarray(known_mask, dtype=bool)
        if not labeled_mask.any():
            raise DataError("labeled set is empty")
        if np.any(labeled_mask & ~known_mask):
            raise DataError("labeled nodes must have known label values")
        if task == "classification":
            known = values[known_mask]
            if known.size and (known.min() < 0 or known.max() >= self.num_classes):
                raise DataError(
                    f"class indices must lie in [0, {self.num_classes})")
        self.values = values
        self.labeled_mask = labeled_mask
        self.known_mask = known_mask
        for arr in (self.values, self.labeled_mask, self.known_mask):
            arr.setflags(write=False)

    @property
    def num_rows(self) -> int:
        return self.labeled_mask.shape[0]

    @property
    def labeled_ids(self) -> np.ndarray:
        return np.flatnonzero(self.labeled_mask)

    @property
    def unlabeled_ids(self) -> np.ndarray:
        return np.flatnonzero(~self.labeled_mask)

    def target_matrix(self, ids) -> np.ndarray:
        """(len(ids), c) target matrix: values or one-hot class rows."""
        ids = np.asarray(ids, dtype=np.int64)
        if self.task == "regression":
            return self.values[ids][:, None]
        out = np.zeros((ids.shape[0], self.num_classes))
        out[np.arange(ids.shape[0]), self.values[ids]] = 1.0
        return out
