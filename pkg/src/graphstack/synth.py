"""Reproducible synthetic node-prediction datasets.

Graphs are homophilous two-block stochastic block models.  Features mix
direct (noisy) copies of the target, GMRF draws over the graph, and
pure-noise columns, so base models have real but imperfect signal and
graph smoothing has something to add.  Regression targets are a deeply
propagated random seed signal (graph-smooth by construction);
classification targets are the block ids.
"""

from __future__ import annotations

import json
import os

import numpy as np

from graphstack.dataset_io import Dataset
from graphstack.errors import ConfigError
from graphstack.graph import Graph, write_edge_list
from graphstack.kernels import KernelSpec, build_kernel
from graphstack.leakage import GMRFModel, sample_gmrf
from graphstack.propagation import PredictionFrame, PropagationConfig, propagate
from graphstack.tables import FeatureTable, LabelTable

SYNTH_DEFAULTS = {
    "task": "classification",
    "num_nodes": 1000,
    "seed": 0,
    "graph": {"p_in": 0.02, "p_out": 0.002},
    "features": {
        "signal_columns": 2,
        "noise_sigma": 1.0,
        "gmrf_columns": 2,
        "gmrf_alpha": 1.0,
        "gmrf_beta": 4.0,
        "noise_columns": 3,
        "block_shift": 0.8,
    },
    "labels": {"propagation_lambda": 0.9, "propagation_steps": 10},
    "split": {"train": 0.6, "valid": 0.2, "test": 0.2},
}


def _merged(spec: dict) -> dict:
    out = json.loads(json.dumps(SYNTH_DEFAULTS))
    for key, value in spec.items():
        if key not in out:
            raise ConfigError(f"unknown synth key {key!r}")
        if isinstance(value, dict):
            unknown = set(value) - set(out[key])
            if unknown:
                raise ConfigError(f"unknown synth keys {sorted(unknown)} "
                                  f"under {key!r}")
            out[key].update(value)
        else:
            out[key] = value
    return out


def two_block_graph(num_nodes: int, p_in: float, p_out: float,
                    rng) -> tuple[Graph, np.ndarray]:
    """Stochastic block model with two equal blocks; returns (graph, block)."""
    blocks = np.zeros(num_nodes, dtype=np.int64)
    blocks[num_nodes // 2:] = 1
    prob = np.where(blocks[:, None] == blocks[None, :], p_in, p_out)
    draws = rng.random((num_nodes, num_nodes))
    upper = np.triu(draws < prob, k=1)
    u, v = np.nonzero(upper)
    edges = list(zip(u.tolist(), v.tolist()))
    # keep every node attached so propagation reaches it
    graph = Graph.from_edges(num_nodes, edges)
    for w in np.flatnonzero(graph.degrees == 0):
        same = np.flatnonzero((blocks == blocks[w])
                              & (np.arange(num_nodes) != w))
        edges.append((int(w), int(rng.choice(same))))
        graph = Graph.from_edges(num_nodes, edges)
    return graph, blocks


def generate(spec: dict) -> Dataset:
    """Build the dataset described by a synth spec (defaults filled in)."""
    spec = _merged(spec)
    task = spec["task"]
    if task not in ("regression", "classification"):
        raise ConfigError(f"unknown task {task!r}")
    n = int(spec["num_nodes"])
    rng = np.random.default_rng(int(spec["seed"]))
    graph, blocks = two_block_graph(n, spec["graph"]["p_in"],
                                    spec["graph"]["p_out"], rng)
    feats = spec["features"]

    if task == "classification":
        target = blocks.astype(np.int64)
        signal_base = np.where(blocks == 1, 1.0, -1.0) * feats["block_shift"]
    else:
        seed_signal = rng.standard_normal(n)
        cfg = PropagationConfig(lam=spec["labels"]["propagation_lambda"],
                                num_steps=int(spec["labels"]["propagation_steps"]),
                                kernel=KernelSpec("sym_norm_adjacency"))
        operator = build_kernel(graph, cfg.kernel)
        frames = propagate(PredictionFrame(seed_signal), operator, cfg)
        smooth = frames[-1].values[:, 0]
        target = (smooth - smooth.mean()) / max(smooth.std(), 1e-12)
        signal_base = target

    columns = []
    values = {}
    for j in range(int(feats["signal_columns"])):
        name = f"signal{j}"
        columns.append((name, "numeric"))
        values[name] = signal_base + feats["noise_sigma"] * rng.standard_normal(n)
    if int(feats["gmrf_columns"]) > 0:
        gmrf = GMRFModel(graph, feats["gmrf_alpha"], feats["gmrf_beta"])
        draws = sample_gmrf(gmrf, int(feats["gmrf_columns"]),
                            int(spec["seed"]) + 101)
        for j in range(int(feats["gmrf_columns"])):
            name = f"gmrf{j}"
            columns.append((name, "numeric"))
            values[name] = draws[j]
    for j in range(int(feats["noise_columns"])):
        name = f"noise{j}"
        columns.append((name, "numeric"))
        values[name] = rng.standard_normal(n)
    features = FeatureTable(columns, values, num_rows=n)

    fractions = spec["split"]
    if abs(fractions["train"] + fractions["valid"] + fractions["test"] - 1.0) > 1e-9:
        raise ConfigError("split fractions must sum to 1")
    order = rng.permutation(n)
    n_train = int(round(fractions["train"] * n))
    n_valid = int(round(fractions["valid"] * n))
    roles = np.full(n, "test", dtype=object)
    roles[order[:n_train]] = "train"
    roles[order[n_train:n_train + n_valid]] = "valid"
    roles = roles.astype(str)

    labeled_mask = roles == "train"
    if task == "classification":
        labels = LabelTable("classification", target, labeled_mask,
                            known_mask=np.ones(n, dtype=bool), num_classes=2)
    else:
        labels = LabelTable("regression", target, labeled_mask,
                            known_mask=np.ones(n, dtype=bool))
    return Dataset(graph, features, labels, roles)


def write_dataset(dataset: Dataset, out_dir) -> dict:
    """Write the four dataset files; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "edges": os.path.join(out_dir, "edges.txt"),
        "features": os.path.join(out_dir, "features.csv"),
        "labels": os.path.join(out_dir, "labels.csv"),
        "split": os.path.join(out_dir, "split.csv"),
    }
    write_edge_list(dataset.graph, paths["edges"])
    table = dataset.features
    kind_code = {"numeric": "num", "categorical": "cat", "text": "text"}
    with open(paths["features"], "w", encoding="utf-8") as fh:
        header = ["node_id"] + [f"{n}:{kind_code[k]}" for n, k in table.columns]
        fh.write(",".join(header) + "\n")
        for i in range(table.num_rows):
            row = [str(i)]
            for name, kind in table.columns:
                v = table.column(name)[i]
                row.append(format(v, ".17g") if kind == "numeric" else str(v))
            fh.write(",".join(row) + "\n")
    labels = dataset.labels
    with open(paths["labels"], "w", encoding="utf-8") as fh:
        fh.write("node_id,label\n")
        for i in np.flatnonzero(labels.known_mask):
            v = labels.values[i]
            text = format(v, ".17g") if labels.task == "regression" else str(int(v))
            fh.write(f"{i},{text}\n")
    with open(paths["split"], "w", encoding="utf-8") as fh:
        fh.write("node_id,role\n")
        for i, role in enumerate(dataset.roles):
            fh.write(f"{i},{role}\n")
    return paths
