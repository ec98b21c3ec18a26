"""Command-line surface.

Subcommands: ``train``, ``predict``, ``evaluate``, ``ablate``,
``leaklab``, ``synth``.  Exit codes: 0 success, 1 usage/configuration
error, 2 data error, 3 pipeline error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from graphstack import __version__
from graphstack.backend import backend_name
from graphstack.config import RunConfig, load_leaklab_config
from graphstack.dataset_io import (
    Dataset,
    csv_node_count,
    evaluate,
    load_dataset,
    read_feature_csv,
    read_label_csv,
    read_predictions_csv,
    read_split_csv,
    write_predictions_csv,
)
from graphstack.errors import (
    ConfigError,
    DataError,
    FileParseError,
    GraphStackError,
    IntegrityError,
    NumericError,
    PipelineError,
    ShapeError,
    SizeError,
)
from graphstack.graph import read_edge_list
from graphstack.leakage import GMRFModel, leakage_experiment, random_leak_graph
from graphstack.models import ModelSpec
from graphstack.propagation import PredictionFrame
from graphstack.stacking import FinalPredictor, ablation_run, run_pipeline
from graphstack.synth import generate, write_dataset
from graphstack.tables import LabelTable

USAGE_EXIT, DATA_EXIT, PIPELINE_EXIT = 1, 2, 3


class _Manifest:
    """Line-delimited JSON records describing one run."""

    def __init__(self, path):
        self.path = path
        self.records = []

    def add(self, record: str, **payload):
        self.records.append({"record": record, **payload})

    def write(self):
        with open(self.path, "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _load_run_dataset(cfg: RunConfig) -> Dataset:
    return load_dataset(cfg.dataset_paths["edges"],
                        cfg.dataset_paths["features"],
                        cfg.dataset_paths["labels"],
                        cfg.dataset_paths["split"],
                        task=cfg.task)


def _metric_ids(dataset: Dataset, role: str) -> np.ndarray:
    ids = dataset.role_ids(role)
    return ids[dataset.labels.known_mask[ids]]


def cmd_train(args) -> int:
    cfg = RunConfig.from_file(args.config)
    workers = args.workers if args.workers else cfg.workers
    dataset = _load_run_dataset(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    manifest = _Manifest(os.path.join(cfg.output_dir, "manifest.jsonl"))
    manifest.add("config", config=cfg.raw, backend=backend_name(),
                 version=__version__)
    started = time.time()
    result = run_pipeline(dataset, cfg.stack, cfg.rosters,
                          cs_config=cfg.cs_config, workers=workers)
    train_seconds = time.time() - started
    labeled = dataset.labels.labeled_ids
    for state in result.layer_states[1:]:
        for tag in sorted(state.oof):
            matrix = state.oof[tag]
            oof_frame = PredictionFrame(
                matrix.full_frame_values(dataset.graph.num_nodes),
                model_tag=tag)
            manifest.add("layer_model", layer=state.layer_index, model=tag,
                         oof_metric=evaluate(oof_frame, dataset.labels,
                                             labeled))
    manifest.add("ensemble", weights=result.weights.to_dict())
    final = result.output_frame
    metrics = {}
    for role in ("train", "valid", "test"):
        ids = _metric_ids(dataset, role)
        if ids.size:
            metrics[role] = evaluate(final, dataset.labels, ids)
    manifest.add("final", metrics=metrics, wall_seconds=train_seconds,
                 layer_seconds=list(result.layer_seconds))
    predictions_path = os.path.join(cfg.output_dir, "predictions.csv")
    write_predictions_csv(predictions_path, final)
    with open(os.path.join(cfg.output_dir, "weights.json"), "w",
              encoding="utf-8") as fh:
        json.dump(result.weights.to_dict(), fh, indent=2, sort_keys=True)
    result.save(os.path.join(cfg.output_dir, "predictor"))
    manifest.write()
    print(f"wrote {predictions_path}")
    for role, value in metrics.items():
        print(f"{cfg.metric}[{role}] = {value:.6f}")
    return 0


def cmd_predict(args) -> int:
    predictor = FinalPredictor.load(args.model_dir)
    # the feature file defines the node universe (isolated nodes included)
    num_nodes = csv_node_count(args.features)
    graph = read_edge_list(args.edges, num_nodes=num_nodes)
    features = read_feature_csv(args.features, graph.num_nodes)
    labels = None
    if args.labels:
        task = predictor.task
        values, known = read_label_csv(args.labels, graph.num_nodes, task)
        labeled_mask = known.copy()
        if args.split:
            roles = read_split_csv(args.split, graph.num_nodes)
            labeled_mask = known & (roles == "train")
        labels = LabelTable(task, values, labeled_mask, known_mask=known,
                            num_classes=predictor.num_classes)
    elif predictor.cs_config is not None:
        raise ConfigError("this predictor applies correct-and-smooth; "
                          "pass --labels (and optionally --split)")
    frame = predictor.replay(graph, features, labels)
    node_ids = None
    if args.roles:
        if not args.split:
            raise ConfigError("--roles needs --split to resolve roles")
        roles = read_split_csv(args.split, graph.num_nodes)
        wanted = set(args.roles.split(","))
        node_ids = np.flatnonzero(np.isin(roles, sorted(wanted)))
    write_predictions_csv(args.out, frame, node_ids)
    print(f"wrote {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    ids, values = read_predictions_csv(args.predictions)
    num_nodes = int(ids.max()) + 1 if ids.size else 0
    num_nodes = max(num_nodes, csv_node_count(args.labels))
    if args.split:
        num_nodes = max(num_nodes, csv_node_count(args.split))
    task = "regression" if args.metric == "mse" else "classification"
    label_values, known = read_label_csv(args.labels, num_nodes, task)
    frame_values = np.zeros((num_nodes, values.shape[1]))
    frame_values[ids] = values
    covered = np.zeros(num_nodes, dtype=bool)
    covered[ids] = True
    select = known & covered
    if args.split and args.roles:
        roles = read_split_csv(args.split, num_nodes)
        select &= np.isin(roles, sorted(set(args.roles.split(","))))
    if not select.any():
        raise ConfigError("no overlapping labeled nodes to evaluate")
    labels = LabelTable(task, label_values, labeled_mask=known,
                        known_mask=known)
    frame = PredictionFrame(frame_values)
    score = evaluate(frame, labels, np.flatnonzero(select))
    print(f"{args.metric} = {score:.10g}")
    return 0


def cmd_ablate(args) -> int:
    cfg = RunConfig.from_file(args.config)
    if cfg.ablation is None:
        raise ConfigError(f"{args.config}: missing 'ablation' section")
    workers = args.workers if args.workers else cfg.workers
    dataset = _load_run_dataset(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    t_values = cfg.ablation["t_values"]
    seeds = cfg.ablation["seeds"]
    rows = {}
    for bagging in (True, False):
        rows[bagging] = ablation_run(dataset, cfg.stack, cfg.rosters,
                                     t_values, bagging, seeds=seeds,
                                     workers=workers)
    header = f"{'T':>4}  {'bagging':>18}  {'no-bagging':>18}"
    print(header)
    out_rows = []
    for rb, rn in zip(rows[True], rows[False]):
        print(f"{rb['T']:>4}  {rb['mean']:>10.4f} ±{rb['std']:.4f}  "
              f"{rn['mean']:>10.4f} ±{rn['std']:.4f}")
        out_rows.append({"T": rb["T"], "bagging": rb, "no_bagging": rn})
    out_path = os.path.join(cfg.output_dir, "ablation.json")
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump({"metric": cfg.metric, "seeds": seeds, "rows": out_rows},
                  fh, indent=2, sort_keys=True)
    print(f"wrote {out_path}")
    return 0


def cmd_leaklab(args) -> int:
    cfg = load_leaklab_config(args.config)
    os.makedirs(cfg["output_dir"], exist_ok=True)
    rng = np.random.default_rng(cfg["seed"])
    spec = ModelSpec.from_dict(cfg["model"])
    reports = []
    print(f"{'cfg':>4} {'eps_hat':>10} {'bound':>10} {'ratio':>7} "
          f"{'sigma^2':>9} {'gap':>9}")
    for i in range(cfg["num_configs"]):
        graph = random_leak_graph(cfg["seed"] + 1000 * i,
                                  num_nodes=cfg["num_nodes"],
                                  edge_prob=cfg["edge_prob"])
        lo, hi = cfg["gmrf_alpha_range"]
        gmrf_alpha = float(lo + (hi - lo) * rng.random())
        lo, hi = cfg["gmrf_beta_range"]
        gmrf_beta = float(lo + (hi - lo) * rng.random())
        gmrf = GMRFModel(graph, gmrf_alpha, gmrf_beta)
        report = leakage_experiment(
            graph, gmrf, spec, cfg["order"], cfg["trials"],
            cfg["seed"] + i, clip=cfg["clip"],
            keep_samples=cfg["write_raw_samples"])
        ratio = (report.epsilon_hat / report.epsilon_bound
                 if report.epsilon_bound > 0 else float("inf"))
        print(f"{i:>4} {report.epsilon_hat:>10.4f} "
              f"{report.epsilon_bound:>10.4f} {ratio:>7.3f} "
              f"{report.sigma_sq:>9.4f} {report.unbagged_gap:>9.5f}")
        payload = report.to_dict()
        payload.update({"config_index": i, "gmrf_alpha": gmrf_alpha,
                        "gmrf_beta": gmrf_beta})
        reports.append(payload)
        if cfg["write_raw_samples"]:
            raw = os.path.join(cfg["output_dir"], f"leak_samples_{i:02d}.csv")
            with open(raw, "w", encoding="utf-8") as fh:
                fh.write("trial,output_d,output_dprime\n")
                for t in range(report.trials):
                    fh.write(f"{t},{report.samples_d[t]:.17g},"
                             f"{report.samples_dprime[t]:.17g}\n")
    out_path = os.path.join(cfg["output_dir"], "leaklab.json")
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump({"config": cfg, "reports": reports}, fh, indent=2,
                  sort_keys=True)
    print(f"wrote {out_path}")
    return 0


def cmd_synth(args) -> int:
    with open(args.spec, "r", encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.spec}: invalid JSON ({exc})") from exc
    out_dir = args.out
    if out_dir is None:
        raise ConfigError("synth needs --out")
    dataset = generate(spec)
    paths = write_dataset(dataset, out_dir)
    print(f"wrote {out_dir} ({dataset.graph.num_nodes} nodes, "
          f"{dataset.graph.num_edges} edges)")
    for key, path in paths.items():
        print(f"  {key}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphstack",
        description="Bagged, stacked ensembles with graph propagation")
    parser.add_argument("--version", action="version",
                        version=f"graphstack {__version__} "
                                f"({backend_name()} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the full pipeline from a config")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="replay a saved predictor")
    p.add_argument("model_dir")
    p.add_argument("--edges", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels")
    p.add_argument("--split")
    p.add_argument("--roles", help="comma-separated roles to emit")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a predictions file")
    p.add_argument("predictions")
    p.add_argument("labels")
    p.add_argument("--metric", choices=["mse", "accuracy"], required=True)
    p.add_argument("--split")
    p.add_argument("--roles")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="depth x bagging ablation table")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=0)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("leaklab", help="adjacent-dataset leakage experiments")
    p.add_argument("config")
    p.set_defaults(func=cmd_leaklab)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("spec")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; remap to the documented code
        return 0 if exc.code == 0 else USAGE_EXIT
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (DataError, IntegrityError, FileParseError, ShapeError, SizeError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except (PipelineError, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return PIPELINE_EXIT
    except GraphStackError as exc:  # anything else from the package
        print(f"error: {exc}", file=sys.stderr)
        return PIPELINE_EXIT


if __name__ == "__main__":
    sys.exit(main())
