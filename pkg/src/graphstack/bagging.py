"""Repeated k-fold partitioning and out-of-fold prediction assembly.

For each of ``n`` repeats the labeled nodes are shuffled and sliced into
``k`` folds; one model copy is trained per (repeat, fold) with that fold
held out.  A labeled node's out-of-fold (OOF) value is the average of
its held-out predictions across repeats; unlabeled nodes average all
k*n copies.

An ``in_fold`` mode exists for the leakage ablation: it trains the same
k*n copies but serves each labeled node the prediction of a copy whose
training set *included* it (fold j is served by the copy holding out
fold (j+1) mod k), isolating the leakage variable at constant compute.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from graphstack.errors import ConfigError, DataError, PipelineError
from graphstack.models import ModelSpec, TrainedModel, encode_features, train
from graphstack.models.encoding import EncoderState
from graphstack.tables import FeatureTable, LabelTable

BAGGING_MODES = ("out_of_fold", "in_fold")


def stable_seed(*parts) -> int:
    """Deterministic 63-bit seed from arbitrary parts (machine independent)."""
    key = "|".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def derive_copy_seed(plan_seed: int, repeat: int, fold: int, tag: str) -> int:
    """Per-copy model seed; removes hidden coupling between copies."""
    return stable_seed(plan_seed, repeat, fold, tag)


@dataclass(frozen=True)
class FoldPlan:
    """n-repeat k-fold partition of the labeled nodes.

    ``assignments[i][j]`` is the fold index of ``labeled_nodes[j]`` in
    repeat ``i``.  A deterministic function of (labeled_nodes, k, n,
    seed, stratify_labels).
    """

    labeled_nodes: np.ndarray
    num_folds: int
    num_repeats: int
    assignments: np.ndarray
    seed: int
    stratified: bool
    warnings: tuple = field(default=())

    def position_of(self) -> dict:
        return {int(v): j for j, v in enumerate(self.labeled_nodes)}

    def fold_members(self, repeat: int, fold: int) -> np.ndarray:
        """Global node ids of one fold."""
        return self.labeled_nodes[self.assignments[repeat] == fold]

    def complement_members(self, repeat: int, fold: int) -> np.ndarray:
        return self.labeled_nodes[self.assignments[repeat] != fold]


def _fold_sizes(count: int, k: int, start: int = 0):
    """k near-equal sizes; the remainder goes to folds start, start+1, ..."""
    base = count // k
    extra = count % k
    sizes = np.full(k, base, dtype=np.int64)
    for r in range(extra):
        sizes[(start + r) % k] += 1
    return sizes, (start + extra) % k


def make_fold_plan(labeled, k: int, n: int, seed: int,
                   stratify=None) -> FoldPlan:
    """Build a FoldPlan; same arguments always give the same plan.

    With ``stratify`` (a per-labeled-node label vector), per-class fold
    counts differ by at most one, and the rolling remainder cursor keeps
    total fold sizes within one of each other too.  Classes with fewer
    members than one per fold trigger a fallback to unstratified
    assignment, recorded as a plan warning.
    """
    labeled = np.asarray(labeled, dtype=np.int64)
    if n < 1:
        raise ConfigError("need at least one repeat")
    if k < 2:
        raise ConfigError("need at least two folds")
    if k > labeled.shape[0]:
        raise ConfigError(
            f"cannot split {labeled.shape[0]} labeled nodes into {k} folds")
    warnings = []
    stratified = stratify is not None
    if stratified:
        stratify = np.asarray(stratify)
        if stratify.shape[0] != labeled.shape[0]:
            raise ConfigError("stratify labels must align with labeled nodes")
        class_values, class_counts = np.unique(stratify, return_counts=True)
        if class_counts.min() < k:
            warnings.append(
                "stratification disabled: class "
                f"{class_values[class_counts.argmin()]!r} has fewer members "
                f"than one per fold ({class_counts.min()} < {k})")
            stratified = False

    assignments = np.empty((n, labeled.shape[0]), dtype=np.int64)
    for repeat in range(n):
        rng = np.random.default_rng(seed + repeat)
        if not stratified:
            order = rng.permutation(labeled.shape[0])
            sizes, _ = _fold_sizes(labeled.shape[0], k)
            fold_of = np.empty(labeled.shape[0], dtype=np.int64)
            pos = 0
            for f in range(k):
                fold_of[order[pos:pos + sizes[f]]] = f
                pos += sizes[f]
            assignments[repeat] = fold_of
        else:
            fold_of = np.empty(labeled.shape[0], dtype=np.int64)
            cursor = 0
            for value in class_values:
                members = np.flatnonzero(stratify == value)
                perm = members[rng.permutation(members.shape[0])]
                sizes, cursor = _fold_sizes(perm.shape[0], k, cursor)
                pos = 0
                for f in range(k):
                    fold_of[perm[pos:pos + sizes[f]]] = f
                    pos += sizes[f]
            assignments[repeat] = fold_of
    return FoldPlan(labeled, int(k), int(n), assignments, int(seed),
                    stratified, tuple(warnings))


@dataclass
class FittedCopy:
    """One trained (repeat, fold) copy with its private encoder."""

    repeat: int
    fold: int
    encoder: EncoderState
    model: TrainedModel
    training_ids: np.ndarray


class OOFMatrix:
    """Aggregated bagged predictions for one model, plus raw provenance.

    ``oof`` rows align with ``plan.labeled_nodes``; ``unlabeled`` rows
    with ``unlabeled_nodes``.  Raw per-repeat OOF values and per-copy
    unlabeled predictions are retained so aggregates can be recomputed
    and leak-freedom audited.
    """

    def __init__(self, tag, plan, unlabeled_nodes, per_repeat_oof,
                 per_copy_unlabeled, mode, copies=None):
        self.tag = tag
        self.plan = plan
        self.unlabeled_nodes = np.asarray(unlabeled_nodes, dtype=np.int64)
        self.per_repeat_oof = per_repeat_oof       # (n, |L|, c)
        self.per_copy_unlabeled = per_copy_unlabeled  # (n, k, |U|, c)
        self.mode = mode
        self.copies = copies                       # {(repeat, fold): FittedCopy}
        self.oof = per_repeat_oof.mean(axis=0)
        if per_copy_unlabeled.size:
            self.unlabeled = per_copy_unlabeled.mean(axis=(0, 1))
        else:
            self.unlabeled = np.zeros((0, per_repeat_oof.shape[2]))

    @property
    def num_columns(self) -> int:
        return self.per_repeat_oof.shape[2]

    def serving_fold(self, repeat: int, fold: int) -> int:
        """Which fold's labeled rows the (repeat, fold) copy predicted."""
        if self.mode == "out_of_fold":
            return fold
        return (fold - 1) % self.plan.num_folds

    def leak_violations(self) -> list:
        """(node, repeat) pairs whose serving copy trained on the node.

        Empty for structurally leak-free out_of_fold runs; in_fold runs
        violate by construction.
        """
        if self.copies is None:
            raise ConfigError("copies were not retained; cannot audit")
        violations = []
        for (repeat, fold), copy in sorted(self.copies.items()):
            trained_on = set(copy.training_ids.tolist())
            served = self.plan.fold_members(repeat, self.serving_fold(repeat, fold))
            for v in served:
                if int(v) in trained_on:
                    violations.append((int(v), repeat))
        return violations

    def full_frame_values(self, num_nodes: int) -> np.ndarray:
        """Assemble (num_nodes, c) values in global node order."""
        out = np.zeros((num_nodes, self.num_columns))
        out[self.plan.labeled_nodes] = self.oof
        out[self.unlabeled_nodes] = self.unlabeled
        return out

    def write_provenance_csv(self, path) -> None:
        """Diagnostic dump: which copy served each labeled node's value."""
        plan = self.plan
        k = plan.num_folds
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("node_id,repeat,fold,model_tag\n")
            for repeat in range(plan.num_repeats):
                for pos, node in enumerate(plan.labeled_nodes):
                    node_fold = plan.assignments[repeat, pos]
                    if self.mode == "out_of_fold":
                        copy_fold = node_fold
                    else:
                        copy_fold = (node_fold + 1) % k
                    fh.write(f"{int(node)},{repeat},{int(copy_fold)},"
                             f"{self.tag}\n")


def _fit_one_copy(plan, features, labels, spec, tag, repeat, fold):
    train_ids = plan.complement_members(repeat, fold)
    try:
        matrix, encoder = encode_features(features, train_ids)
        seed = derive_copy_seed(plan.seed, repeat, fold, tag)
        model = train(spec.with_seed(seed), matrix[train_ids],
                      labels.values[train_ids], labels.task,
                      num_classes=labels.num_classes, training_ids=train_ids)
    except (ConfigError, DataError, PipelineError):
        raise
    except Exception as exc:
        raise PipelineError(
            f"model {tag!r} failed on repeat {repeat} fold {fold}: "
            f"{exc}") from exc
    return matrix, encoder, model


def run_bagged_training(plan: FoldPlan, features: FeatureTable,
                        labels: LabelTable, model_spec: ModelSpec,
                        unlabeled, tag: str = "", mode: str = "out_of_fold",
                        workers: int = 1, keep_copies: bool = True) -> OOFMatrix:
    """Train all k*n copies and assemble the OOF matrix.

    Copies for distinct (repeat, fold) pairs may train concurrently;
    aggregation order is fixed by (repeat, fold) keys, so the result is
    identical whether copies run serially or on a pool.
    """
    if mode not in BAGGING_MODES:
        raise ConfigError(f"unknown bagging mode {mode!r}")
    if not tag:
        tag = model_spec.family
    unlabeled = np.asarray(unlabeled, dtype=np.int64)
    n_rep, k = plan.num_repeats, plan.num_folds
    c = labels.num_classes
    num_labeled = plan.labeled_nodes.shape[0]
    position = plan.position_of()

    def job(key):
        repeat, fold = key
        matrix, encoder, model = _fit_one_copy(
            plan, features, labels, model_spec, tag, repeat, fold)
        serve_fold = fold if mode == "out_of_fold" else (fold - 1) % k
        served_ids = plan.fold_members(repeat, serve_fold)
        try:
            served_pred = model.predict(matrix[served_ids], model_tag=tag).values
            unl_pred = model.predict(matrix[unlabeled], model_tag=tag).values
        except DataError as exc:
            raise DataError(
                f"model {tag!r} produced invalid predictions on repeat "
                f"{repeat} fold {fold}: {exc}") from exc
        copy = FittedCopy(repeat, fold, encoder, model,
                          np.asarray(plan.complement_members(repeat, fold)))
        return served_ids, served_pred, unl_pred, copy

    keys = [(i, j) for i in range(n_rep) for j in range(k)]
    results = {}
    if workers <= 1:
        for key in keys:
            results[key] = job(key)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {key: pool.submit(job, key) for key in keys}
            for key, fut in futures.items():
                results[key] = fut.result()

    per_repeat_oof = np.zeros((n_rep, num_labeled, c))
    per_copy_unlabeled = np.zeros((n_rep, k, unlabeled.shape[0], c))
    copies = {}
    for key in keys:  # fixed order regardless of completion order
        served_ids, served_pred, unl_pred, copy = results[key]
        rows = [position[int(v)] for v in served_ids]
        per_repeat_oof[key[0], rows] = served_pred
        per_copy_unlabeled[key[0], key[1]] = unl_pred
        if keep_copies:
            copies[key] = copy
    return OOFMatrix(tag, plan, unlabeled, per_repeat_oof, per_copy_unlabeled,
                     mode, copies if keep_copies else None)
