"""Dataset assembly from on-disk files, metrics, and prediction IO.

File formats (all UTF-8):

- edges: plain text, one ``u v`` pair per line, ``#`` comments.
- features: CSV whose header is ``node_id`` followed by ``name:kind``
  columns with kind in {num, cat, text}; text fields may be quoted.
- labels: CSV ``node_id,label``.  Classification labels are dense
  0-based class indices.
- split: CSV ``node_id,role`` with role in {train, valid, test}.

Predictions are written as ``node_id`` plus one full-precision column
per output, so a written file re-reads to the exact in-memory values.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from graphstack.errors import (
    ConfigError,
    DataError,
    FileParseError,
    IntegrityError,
)
from graphstack.graph import Graph, read_edge_list
from graphstack.propagation import PredictionFrame
from graphstack.tables import FeatureTable, LabelTable

ROLES = ("train", "valid", "test")
_KIND_MAP = {"num": "numeric", "cat": "categorical", "text": "text"}


@dataclass(frozen=True)
class Dataset:
    """Graph, features, labels, and a role for every node."""

    graph: Graph
    features: FeatureTable
    labels: LabelTable
    roles: np.ndarray  # array of "train" / "valid" / "test"

    def __post_init__(self):
        n = self.graph.num_nodes
        if self.features.num_rows != n or self.labels.num_rows != n:
            raise IntegrityError("features/labels row counts must match graph")
        if self.roles.shape != (n,):
            raise IntegrityError("every node needs a role")
        if not (self.roles == "train").any():
            raise IntegrityError("train set is empty")

    def role_ids(self, *roles) -> np.ndarray:
        mask = np.zeros(self.graph.num_nodes, dtype=bool)
        for role in roles:
            if role not in ROLES:
                raise ConfigError(f"unknown role {role!r}")
            mask |= self.roles == role
        return np.flatnonzero(mask)


def _read_csv_rows(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FileParseError("empty file", path=path) from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FileParseError(
                    f"expected {len(header)} fields, got {len(row)}",
                    path=path, line=lineno)
            rows.append((lineno, row))
    return header, rows


def _parse_node_id(text, path, lineno):
    try:
        value = int(text)
    except ValueError:
        raise FileParseError(f"bad node id {text!r}", path=path,
                             line=lineno) from None
    if value < 0:
        raise FileParseError("negative node id", path=path, line=lineno)
    return value


def read_feature_csv(path, num_nodes) -> FeatureTable:
    header, rows = _read_csv_rows(path)
    if not header or header[0] != "node_id":
        raise FileParseError("first column must be 'node_id'", path=path, line=1)
    columns = []
    for col in header[1:]:
        if ":" not in col:
            raise FileParseError(
                f"feature column {col!r} must be 'name:kind'", path=path, line=1)
        name, kind = col.rsplit(":", 1)
        if kind not in _KIND_MAP:
            raise FileParseError(
                f"unknown column kind {kind!r} (use num|cat|text)",
                path=path, line=1)
        columns.append((name, _KIND_MAP[kind]))
    seen = np.zeros(num_nodes, dtype=bool)
    storage = {name: [None] * num_nodes for name, _ in columns}
    for lineno, row in rows:
        node = _parse_node_id(row[0], path, lineno)
        if node >= num_nodes:
            raise IntegrityError(
                f"{path}: node id {node} not present in the graph")
        if seen[node]:
            raise FileParseError(f"duplicate node id {node}", path=path,
                                 line=lineno)
        seen[node] = True
        for (name, kind), text in zip(columns, row[1:]):
            if kind == "numeric":
                if text == "":
                    storage[name][node] = np.nan
                else:
                    try:
                        storage[name][node] = float(text)
                    except ValueError:
                        raise FileParseError(
                            f"bad numeric value {text!r} in column {name!r}",
                            path=path, line=lineno) from None
            else:
                storage[name][node] = text
    if not seen.all():
        missing = np.flatnonzero(~seen)[:10].tolist()
        raise IntegrityError(
            f"{path}: feature rows missing for node ids {missing}")
    return FeatureTable(columns, storage, num_rows=num_nodes)


def read_label_csv(path, num_nodes, task) -> tuple[np.ndarray, np.ndarray]:
    """Return (values, known_mask); values hold NaN / -1 where unknown."""
    header, rows = _read_csv_rows(path)
    if header[:2] != ["node_id", "label"]:
        raise FileParseError("header must be 'node_id,label'", path=path, line=1)
    if task == "regression":
        values = np.full(num_nodes, np.nan)
    else:
        values = np.full(num_nodes, -1, dtype=np.int64)
    known = np.zeros(num_nodes, dtype=bool)
    for lineno, row in rows:
        node = _parse_node_id(row[0], path, lineno)
        if node >= num_nodes:
            raise IntegrityError(f"{path}: node id {node} not in the graph")
        try:
            values[node] = (float(row[1]) if task == "regression"
                            else int(row[1]))
        except ValueError:
            raise FileParseError(f"bad label {row[1]!r}", path=path,
                                 line=lineno) from None
        known[node] = True
    return values, known


def read_split_csv(path, num_nodes=None) -> np.ndarray:
    """Roles per node; with ``num_nodes=None`` the file defines the count."""
    header, rows = _read_csv_rows(path)
    if header[:2] != ["node_id", "role"]:
        raise FileParseError("header must be 'node_id,role'", path=path, line=1)
    parsed = []
    max_id = -1
    for lineno, row in rows:
        node = _parse_node_id(row[0], path, lineno)
        if row[1] not in ROLES:
            raise FileParseError(f"unknown role {row[1]!r}", path=path,
                                 line=lineno)
        parsed.append((node, row[1]))
        max_id = max(max_id, node)
    if num_nodes is None:
        num_nodes = max_id + 1
    roles = np.full(num_nodes, "", dtype=object)
    for node, role in parsed:
        if node >= num_nodes:
            raise IntegrityError(f"{path}: node id {node} not in the graph")
        roles[node] = role
    missing = np.flatnonzero(roles == "")
    if missing.size:
        raise IntegrityError(
            f"{path}: split file missing node ids {missing[:10].tolist()}")
    return roles.astype(str)


def csv_node_count(path) -> int:
    """Max node id + 1 in any CSV whose first column is node_id."""
    _, rows = _read_csv_rows(path)
    max_id = -1
    for lineno, row in rows:
        max_id = max(max_id, _parse_node_id(row[0], path, lineno))
    return max_id + 1


def infer_task(label_path) -> str:
    """Labels that all parse as integers mean classification."""
    _, rows = _read_csv_rows(label_path)
    for _, row in rows:
        try:
            int(row[1])
        except ValueError:
            return "regression"
    return "classification"


def load_dataset(edge_path, feature_path, label_path, split_path,
                 task: str | None = None) -> Dataset:
    """Read and cross-validate the four dataset files.

    The split file defines the node set (it must assign every node a
    role); features must cover it exactly, labels may cover a subset,
    and edges may not reference ids outside it.  Nodes absent from the
    edge file are isolated nodes.  The training role must be fully
    labeled.
    """
    roles = read_split_csv(split_path)
    graph = read_edge_list(edge_path, num_nodes=roles.shape[0])
    if task is None:
        task = infer_task(label_path)
    n = graph.num_nodes
    features = read_feature_csv(feature_path, n)
    values, known = read_label_csv(label_path, n, task)
    train_mask = roles == "train"
    unlabeled_train = np.flatnonzero(train_mask & ~known)
    if unlabeled_train.size:
        raise IntegrityError(
            f"train nodes without labels: {unlabeled_train[:10].tolist()}")
    labels = LabelTable(task, values, labeled_mask=train_mask,
                        known_mask=known)
    return Dataset(graph, features, labels, roles)


def evaluate(preds: PredictionFrame, labels: LabelTable, ids) -> float:
    """Metric over the given node ids: MSE or argmax accuracy.

    Classification frames are clamped/renormalized before scoring; ties
    in the argmax resolve to the lowest class index.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        raise ConfigError("empty node selection for evaluation")
    if not labels.known_mask[ids].all():
        raise DataError("labels unknown for some requested nodes")
    if labels.task == "regression":
        diff = preds.values[ids, 0] - labels.values[ids]
        return float(np.mean(diff ** 2))
    probs = preds.as_probabilities()[ids]
    picked = probs.argmax(axis=1)
    return float(np.mean(picked == labels.values[ids]))


def write_predictions_csv(path, frame: PredictionFrame, node_ids=None) -> None:
    """Full-precision CSV: node_id plus one column per output."""
    values = frame.values
    if node_ids is None:
        node_ids = np.arange(values.shape[0])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id"] + [f"y{j}" for j in range(values.shape[1])])
        for i in node_ids:
            writer.writerow([int(i)] + [format(v, ".17g") for v in values[i]])


def read_predictions_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Return (node_ids, values) from a predictions file."""
    header, rows = _read_csv_rows(path)
    if not header or header[0] != "node_id":
        raise FileParseError("first column must be 'node_id'", path=path, line=1)
    width = len(header) - 1
    ids = np.empty(len(rows), dtype=np.int64)
    values = np.empty((len(rows), width))
    for i, (lineno, row) in enumerate(rows):
        ids[i] = _parse_node_id(row[0], path, lineno)
        try:
            values[i] = [float(v) for v in row[1:]]
        except ValueError:
            raise FileParseError("bad prediction value", path=path,
                                 line=lineno) from None
    return ids, values
