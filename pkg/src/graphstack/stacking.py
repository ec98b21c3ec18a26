"""Layer-wise stacking with graph propagation between layers.

Each layer trains its model roster under repeated k-fold bagging on the
current feature table, assembles every model's predictions into a
global-node-order frame (OOF values at labeled nodes, copy averages at
unlabeled nodes), smooths those frames over the graph, and concatenates
the selected smoothing depths onto the feature table for the next
layer.  The top layer's models are combined by greedy ensemble
selection, with optional correct-and-smooth afterwards.

Frames always cover all nodes: unlabeled nodes take part in every
propagation, so they shape the features labeled nodes see downstream.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from graphstack.bagging import (
    FittedCopy,
    FoldPlan,
    make_fold_plan,
    run_bagged_training,
    stable_seed,
)
from graphstack.correct_smooth import CSConfig, correct_and_smooth
from graphstack.dataset_io import Dataset, evaluate
from graphstack.ensemble import EnsembleWeights, select
from graphstack.errors import ConfigError, PipelineError
from graphstack.graph import Graph
from graphstack.kernels import KernelSpec, build_kernel
from graphstack.models import ModelSpec, TrainedModel
from graphstack.models.container import load_container, save_container
from graphstack.models.encoding import EncoderState
from graphstack.propagation import PredictionFrame, PropagationConfig, propagate
from graphstack.tables import FeatureTable, LabelTable


@dataclass(frozen=True)
class StackConfig:
    """Pipeline hyperparameters.

    ``step_subset`` picks which smoothing depths become features (a
    nonempty subset of 0..num_steps).  ``include_raw_features`` controls
    whether stacker layers past the first still see the original
    columns; the first layer always trains on them.
    """

    num_layers: int = 1
    num_folds: int = 5
    num_repeats: int = 1
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    step_subset: tuple = (0,)
    include_raw_features: bool = True
    seed: int = 0
    bagging_mode: str = "out_of_fold"
    shared_fold_plan: bool = True
    stratify: bool | None = None  # None: stratify iff classification
    selection_mode: str = "oof"   # or "validation"
    selection_iterations: int = 100
    max_model_copies: int = 4096

    def __post_init__(self):
        if self.num_layers < 1:
            raise ConfigError("need at least one stacking layer")
        steps = tuple(sorted(set(int(t) for t in self.step_subset)))
        object.__setattr__(self, "step_subset", steps)
        if not steps:
            raise ConfigError("step_subset cannot be empty")
        if steps[0] < 0 or steps[-1] > self.propagation.num_steps:
            raise ConfigError(
                f"step_subset must lie inside 0..{self.propagation.num_steps}")
        if self.selection_mode not in ("oof", "validation"):
            raise ConfigError(f"unknown selection_mode {self.selection_mode!r}")

    def to_dict(self):
        prop = self.propagation
        return {
            "num_layers": self.num_layers,
            "num_folds": self.num_folds,
            "num_repeats": self.num_repeats,
            "propagation": {
                "lambda": prop.lam,
                "num_steps": prop.num_steps,
                "step_size": prop.step_size,
                "kernel": {
                    "kind": prop.kernel.kind,
                    "isolated_node_policy": prop.kernel.isolated_node_policy,
                },
            },
            "step_subset": list(self.step_subset),
            "include_raw_features": self.include_raw_features,
            "seed": self.seed,
            "bagging_mode": self.bagging_mode,
            "shared_fold_plan": self.shared_fold_plan,
            "stratify": self.stratify,
            "selection_mode": self.selection_mode,
            "selection_iterations": self.selection_iterations,
            "max_model_copies": self.max_model_copies,
        }

    @classmethod
    def from_dict(cls, d):
        prop = d.get("propagation", {})
        kernel = prop.get("kernel", {})
        return cls(
            num_layers=d.get("num_layers", 1),
            num_folds=d.get("num_folds", 5),
            num_repeats=d.get("num_repeats", 1),
            propagation=PropagationConfig(
                lam=prop.get("lambda", 0.9),
                num_steps=prop.get("num_steps", 0),
                step_size=prop.get("step_size", 1.0),
                kernel=KernelSpec(
                    kind=kernel.get("kind", "sym_norm_adjacency"),
                    isolated_node_policy=kernel.get(
                        "isolated_node_policy", "identity_row"))),
            step_subset=tuple(d.get("step_subset", (0,))),
            include_raw_features=d.get("include_raw_features", True),
            seed=d.get("seed", 0),
            bagging_mode=d.get("bagging_mode", "out_of_fold"),
            shared_fold_plan=d.get("shared_fold_plan", True),
            stratify=d.get("stratify"),
            selection_mode=d.get("selection_mode", "oof"),
            selection_iterations=d.get("selection_iterations", 100),
            max_model_copies=d.get("max_model_copies", 4096),
        )


@dataclass
class LayerState:
    """Artifacts of one layer plus the feature table for the next.

    ``base_table`` holds the original columns, ``block_table`` every
    prediction block appended so far; ``feature_table`` is what the next
    layer trains on.
    """

    layer_index: int
    base_table: FeatureTable
    block_table: FeatureTable
    include_raw: bool = True
    oof: dict = field(default_factory=dict)     # tag -> OOFMatrix
    frames: dict = field(default_factory=dict)  # tag -> [PredictionFrame]

    @property
    def feature_table(self) -> FeatureTable:
        if self.layer_index == 0 or self.include_raw:
            return _merge_tables(self.base_table, self.block_table)
        return self.block_table

    @classmethod
    def initial(cls, features: FeatureTable, include_raw: bool = True):
        return cls(0, features, FeatureTable.empty(features.num_rows),
                   include_raw)


def _merge_tables(base: FeatureTable, blocks: FeatureTable) -> FeatureTable:
    if blocks.num_columns == 0:
        return base
    columns = list(base.columns) + list(blocks.columns)
    values = {n: base.column(n) for n, _ in base.columns}
    values.update({n: blocks.column(n) for n, _ in blocks.columns})
    return FeatureTable(columns, values, num_rows=base.num_rows)


def roster_tags(roster) -> list:
    """Stable unique tag per roster entry (family, numbered on repeats)."""
    tags = []
    seen = {}
    for spec in roster:
        count = seen.get(spec.family, 0)
        seen[spec.family] = count + 1
        tags.append(spec.family if count == 0 else f"{spec.family}{count + 1}")
    return tags


def _plan_for(cfg: StackConfig, labels: LabelTable, layer: int,
              tag: str) -> FoldPlan:
    labeled = labels.labeled_ids
    do_strat = (labels.task == "classification" if cfg.stratify is None
                else bool(cfg.stratify))
    strat = labels.values[labeled] if do_strat else None
    if cfg.shared_fold_plan:
        seed = stable_seed(cfg.seed, "plan", layer)
    else:
        seed = stable_seed(cfg.seed, "plan", layer, tag)
    return make_fold_plan(labeled, cfg.num_folds, cfg.num_repeats, seed,
                          stratify=strat)


def _block_from_frames(layer: int, tag: str, frames, step_subset):
    names = []
    columns = []
    for t in step_subset:
        values = frames[t].values
        for c in range(values.shape[1]):
            names.append(f"l{layer}.{tag}.t{t}.c{c}")
            columns.append(values[:, c])
    return names, np.stack(columns, axis=1)


def run_layer(state: LayerState, roster, graph: Graph, cfg: StackConfig,
              labels: LabelTable, operator=None, workers: int = 1) -> LayerState:
    """Train one stacking layer and extend the feature blocks."""
    if not roster:
        raise ConfigError("layer roster is empty")
    if operator is None:
        operator = build_kernel(graph, cfg.propagation.kernel)
    layer = state.layer_index + 1
    tags = roster_tags(roster)
    unlabeled = labels.unlabeled_ids
    table = state.feature_table
    oof = {}
    frames = {}
    block_names = []
    blocks = []
    for tag, spec in zip(tags, roster):
        plan = _plan_for(cfg, labels, layer, tag)
        result = run_bagged_training(
            plan, table, labels, spec, unlabeled, tag=tag,
            mode=cfg.bagging_mode, workers=workers)
        oof[tag] = result
        f0 = PredictionFrame(result.full_frame_values(graph.num_nodes),
                             depth=0, model_tag=tag,
                             probability=labels.task == "classification")
        fs = propagate(f0, operator, cfg.propagation)
        frames[tag] = fs
        names, block = _block_from_frames(layer, tag, fs, cfg.step_subset)
        block_names.extend(names)
        blocks.append(block)
    block_table = state.block_table.with_numeric_block(
        block_names, np.concatenate(blocks, axis=1))
    return LayerState(layer, state.base_table, block_table,
                      cfg.include_raw_features, oof, frames)


def _selection_inputs(cfg: StackConfig, top: LayerState, labels: LabelTable,
                      dataset: Dataset | None):
    if cfg.selection_mode == "oof":
        any_oof = top.oof[next(iter(top.oof))]
        ids = any_oof.plan.labeled_nodes
        preds = {tag: m.oof for tag, m in top.oof.items()}
    else:
        if dataset is None:
            raise ConfigError("validation selection mode needs a dataset")
        ids = dataset.role_ids("valid")
        if ids.size == 0:
            raise ConfigError("validation selection mode needs valid nodes")
        if not labels.known_mask[ids].all():
            raise ConfigError("validation selection mode needs valid labels")
        n = dataset.graph.num_nodes
        preds = {tag: m.full_frame_values(n)[ids]
                 for tag, m in top.oof.items()}
    if labels.task == "regression":
        return preds, labels.target_matrix(ids), "mse"
    return preds, labels.values[ids], "log_loss"


@dataclass
class _StoredModel:
    """What the replay path needs from one bagged model."""

    tag: str
    plan: FoldPlan
    unlabeled_nodes: np.ndarray
    mode: str
    copies: dict  # (repeat, fold) -> FittedCopy


def _stored_models(state: LayerState) -> dict:
    out = {}
    for tag, matrix in state.oof.items():
        if matrix.copies is None:
            raise ConfigError("model copies were not retained")
        out[tag] = _StoredModel(tag, matrix.plan, matrix.unlabeled_nodes,
                                matrix.mode, matrix.copies)
    return out


def _assemble_from_copies(stored: _StoredModel, table: FeatureTable,
                          num_nodes: int, num_columns: int) -> np.ndarray:
    """Recompute a model's global frame values from stored copies."""
    plan = stored.plan
    k = plan.num_folds
    position = plan.position_of()
    unlabeled = np.asarray(stored.unlabeled_nodes, dtype=np.int64)
    per_repeat = np.zeros((plan.num_repeats, plan.labeled_nodes.shape[0],
                           num_columns))
    per_copy_unl = np.zeros((plan.num_repeats, k, unlabeled.shape[0],
                             num_columns))
    for (repeat, fold) in sorted(stored.copies):
        copy = stored.copies[(repeat, fold)]
        serve_fold = fold if stored.mode == "out_of_fold" else (fold - 1) % k
        served_ids = plan.fold_members(repeat, serve_fold)
        served_X = copy.encoder.transform(table, served_ids)
        unl_X = copy.encoder.transform(table, unlabeled)
        rows = [position[int(v)] for v in served_ids]
        per_repeat[repeat, rows] = copy.model.predict(served_X).values
        per_copy_unl[repeat, fold] = copy.model.predict(unl_X).values
    out = np.zeros((num_nodes, num_columns))
    out[plan.labeled_nodes] = per_repeat.mean(axis=0)
    if unlabeled.size:
        out[unlabeled] = per_copy_unl.mean(axis=(0, 1))
    return out


class FinalPredictor:
    """All artifacts of one pipeline run; replayable and saveable."""

    def __init__(self, cfg, rosters, layer_states, weights, final_frame,
                 task, num_classes, cs_config=None, cs_frame=None,
                 layer_seconds=()):
        self.cfg = cfg
        self.rosters = rosters
        self.layer_states = layer_states
        self.weights = weights
        self.final_frame = final_frame
        self.task = task
        self.num_classes = num_classes
        self.cs_config = cs_config
        self.cs_frame = cs_frame
        self.layer_seconds = tuple(layer_seconds)
        self.stored_layers = [_stored_models(s) for s in layer_states[1:]]

    @property
    def output_frame(self) -> PredictionFrame:
        """C&S-processed frame when enabled, else the blended frame."""
        return self.cs_frame if self.cs_frame is not None else self.final_frame

    def replay(self, graph: Graph, features: FeatureTable,
               labels: LabelTable | None = None) -> PredictionFrame:
        """Recompute the forward pass from stored model copies.

        Byte-identical to the training-time output on the training
        dataset.  ``labels`` is only required when the predictor has a
        correct-and-smooth stage (its phases read the true labels).
        """
        operator = build_kernel(graph, self.cfg.propagation.kernel)
        base = features
        blocks = FeatureTable.empty(graph.num_nodes)
        top_values = {}
        for layer_idx, stored in enumerate(self.stored_layers, start=1):
            if layer_idx == 1 or self.cfg.include_raw_features:
                table = _merge_tables(base, blocks)
            else:
                table = blocks
            block_names = []
            block_cols = []
            top_values = {}
            for tag in sorted(stored):
                values = _assemble_from_copies(stored[tag], table,
                                               graph.num_nodes,
                                               self.num_classes)
                top_values[tag] = values
                f0 = PredictionFrame(values, depth=0, model_tag=tag,
                                     probability=self.task == "classification")
                fs = propagate(f0, operator, self.cfg.propagation)
                names, block = _block_from_frames(layer_idx, tag, fs,
                                                  self.cfg.step_subset)
                block_names.extend(names)
                block_cols.append(block)
            blocks = blocks.with_numeric_block(
                block_names, np.concatenate(block_cols, axis=1))
        blended = self.weights.blend(top_values)
        frame = PredictionFrame(blended, depth=0, model_tag="ensemble",
                                probability=self.task == "classification")
        if self.cs_config is not None:
            if labels is None:
                raise ConfigError(
                    "this predictor applies correct-and-smooth; labels are "
                    "required for inference")
            frame = correct_and_smooth(frame, labels, graph, self.cs_config)
        return frame

    # -- persistence ----------------------------------------------------

    def save(self, out_dir) -> None:
        os.makedirs(out_dir, exist_ok=True)
        meta = {
            "stack": self.cfg.to_dict(),
            "rosters": [[s.to_dict() for s in r] for r in self.rosters],
            "weights": self.weights.to_dict(),
            "task": self.task,
            "num_classes": self.num_classes,
            "correct_smooth": (None if self.cs_config is None
                               else self.cs_config.to_dict()),
            "layer_tags": [sorted(stored) for stored in self.stored_layers],
        }
        with open(os.path.join(out_dir, "predictor.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
        for layer_idx, stored in enumerate(self.stored_layers, start=1):
            for tag, model in stored.items():
                mdir = os.path.join(out_dir, f"layer_{layer_idx:02d}", tag)
                os.makedirs(mdir, exist_ok=True)
                plan = model.plan
                save_container(
                    os.path.join(mdir, "foldplan.bstw"),
                    {"kind": "foldplan", "num_folds": plan.num_folds,
                     "num_repeats": plan.num_repeats, "seed": plan.seed,
                     "stratified": plan.stratified,
                     "warnings": list(plan.warnings), "mode": model.mode},
                    {"labeled_nodes": plan.labeled_nodes,
                     "assignments": plan.assignments,
                     "unlabeled_nodes": model.unlabeled_nodes})
                for (repeat, fold), copy in sorted(model.copies.items()):
                    save_container(
                        os.path.join(mdir, f"copy_r{repeat}_f{fold}.bstw"),
                        {"kind": "fitted_copy", "repeat": repeat, "fold": fold,
                         "encoder": copy.encoder.to_meta(),
                         "model": copy.model.to_bytes().hex()},
                        {"training_ids": copy.training_ids})

    @classmethod
    def load(cls, out_dir) -> "FinalPredictor":
        with open(os.path.join(out_dir, "predictor.json"),
                  encoding="utf-8") as fh:
            meta = json.load(fh)
        cfg = StackConfig.from_dict(meta["stack"])
        rosters = [[ModelSpec.from_dict(d) for d in r]
                   for r in meta["rosters"]]
        weights = EnsembleWeights(
            {k: float(v) for k, v in meta["weights"]["weights"].items()},
            int(meta["weights"]["iterations"]))
        cs_config = (None if meta["correct_smooth"] is None
                     else CSConfig.from_dict(meta["correct_smooth"]))
        predictor = cls.__new__(cls)
        predictor.cfg = cfg
        predictor.rosters = rosters
        predictor.layer_states = None
        predictor.weights = weights
        predictor.final_frame = None
        predictor.task = meta["task"]
        predictor.num_classes = int(meta["num_classes"])
        predictor.cs_config = cs_config
        predictor.cs_frame = None
        predictor.stored_layers = []
        for layer_idx, tags in enumerate(meta["layer_tags"], start=1):
            stored = {}
            for tag in tags:
                mdir = os.path.join(out_dir, f"layer_{layer_idx:02d}", tag)
                pmeta, parrs = load_container(
                    os.path.join(mdir, "foldplan.bstw"))
                plan = FoldPlan(parrs["labeled_nodes"], pmeta["num_folds"],
                                pmeta["num_repeats"], parrs["assignments"],
                                pmeta["seed"], pmeta["stratified"],
                                tuple(pmeta["warnings"]))
                copies = {}
                for repeat in range(plan.num_repeats):
                    for fold in range(plan.num_folds):
                        cmeta, carrs = load_container(os.path.join(
                            mdir, f"copy_r{repeat}_f{fold}.bstw"))
                        copies[(repeat, fold)] = FittedCopy(
                            repeat, fold,
                            EncoderState.from_meta(cmeta["encoder"]),
                            TrainedModel.from_bytes(
                                bytes.fromhex(cmeta["model"])),
                            carrs["training_ids"])
                stored[tag] = _StoredModel(tag, plan, parrs["unlabeled_nodes"],
                                           pmeta["mode"], copies)
            predictor.stored_layers.append(stored)
        return predictor


def run_pipeline(dataset: Dataset, cfg: StackConfig, rosters,
                 cs_config: CSConfig | None = None,
                 workers: int = 1) -> FinalPredictor:
    """Execute all layers, fit ensemble weights, optionally apply C&S."""
    if len(rosters) != cfg.num_layers:
        raise ConfigError(
            f"rosters must list {cfg.num_layers} layers, got {len(rosters)}")
    total = sum(len(r) for r in rosters) * cfg.num_folds * cfg.num_repeats
    if total > cfg.max_model_copies:
        raise ConfigError(f"{total} model copies exceed "
                          f"max_model_copies={cfg.max_model_copies}")
    labels = dataset.labels
    graph = dataset.graph
    operator = build_kernel(graph, cfg.propagation.kernel)
    state = LayerState.initial(dataset.features, cfg.include_raw_features)
    states = [state]
    layer_seconds = []
    for layer in range(1, cfg.num_layers + 1):
        started = time.perf_counter()
        try:
            state = run_layer(state, rosters[layer - 1], graph, cfg, labels,
                              operator=operator, workers=workers)
        except (ConfigError, PipelineError):
            raise
        except Exception as exc:
            raise PipelineError(f"layer {layer} failed: {exc}") from exc
        layer_seconds.append(time.perf_counter() - started)
        states.append(state)

    top = states[-1]
    preds, targets, loss = _selection_inputs(cfg, top, labels, dataset)
    weights = select(preds, targets, loss=loss,
                     iterations=cfg.selection_iterations)
    per_tag_values = {tag: m.full_frame_values(graph.num_nodes)
                      for tag, m in top.oof.items()}
    final = PredictionFrame(weights.blend(per_tag_values), depth=0,
                            model_tag="ensemble",
                            probability=labels.task == "classification")
    cs_frame = None
    if cs_config is not None:
        cs_frame = correct_and_smooth(final, labels, graph, cs_config)
    return FinalPredictor(cfg, rosters, states, weights, final,
                          labels.task, labels.num_classes, cs_config,
                          cs_frame, layer_seconds)


def ablation_run(dataset: Dataset, cfg: StackConfig, rosters, t_values,
                 bagging: bool, seeds=(0, 1, 2, 3, 4), workers: int = 1):
    """Metric rows (T, mean, std, per-seed) for one bagging mode.

    ``bagging=False`` serves in-fold predictions to the stacker features
    and the ensemble-selection rows, holding compute constant.  Each
    depth T stacks the full step set 0..T.
    """
    if not t_values:
        raise ConfigError("need at least one propagation depth")
    mode = "out_of_fold" if bagging else "in_fold"
    test_ids = dataset.role_ids("test")
    rows = []
    for t in t_values:
        scores = []
        for seed in seeds:
            run_cfg = replace(
                cfg,
                seed=stable_seed(cfg.seed, "ablation", seed),
                bagging_mode=mode,
                propagation=replace(cfg.propagation, num_steps=int(t)),
                step_subset=tuple(range(int(t) + 1)))
            result = run_pipeline(dataset, run_cfg, rosters, workers=workers)
            scores.append(evaluate(result.output_frame, dataset.labels,
                                   test_ids))
        scores = np.asarray(scores)
        rows.append({"T": int(t), "bagging": bagging,
                     "mean": float(scores.mean()), "std": float(scores.std()),
                     "scores": [float(s) for s in scores]})
    return rows
