"""Run configuration files: JSON with a strict schema.

Unknown keys are rejected everywhere; silent misconfiguration is the
main reproducibility hazard.  Relative paths resolve against the config
file's directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import jsonschema

from graphstack.correct_smooth import CSConfig
from graphstack.errors import ConfigError
from graphstack.models import ModelSpec
from graphstack.stacking import StackConfig

_KERNEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"type": "string"},
        "isolated_node_policy": {"enum": ["identity_row", "zero_row"]},
    },
}

_MODEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["family"],
    "properties": {
        "family": {"type": "string"},
        "hyperparameters": {"type": "object"},
        "seed": {"type": "integer"},
    },
}

_STACK_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "num_layers": {"type": "integer", "minimum": 1},
        "num_folds": {"type": "integer", "minimum": 2},
        "num_repeats": {"type": "integer", "minimum": 1},
        "propagation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lambda": {"type": "number"},
                "num_steps": {"type": "integer", "minimum": 0},
                "step_size": {"type": "number"},
                "kernel": _KERNEL_SCHEMA,
            },
        },
        "step_subset": {"type": "array", "items": {"type": "integer"}},
        "include_raw_features": {"type": "boolean"},
        "seed": {"type": "integer"},
        "bagging_mode": {"enum": ["out_of_fold", "in_fold"]},
        "shared_fold_plan": {"type": "boolean"},
        "stratify": {"type": ["boolean", "null"]},
        "selection_mode": {"enum": ["oof", "validation"]},
        "selection_iterations": {"type": "integer", "minimum": 1},
        "max_model_copies": {"type": "integer", "minimum": 1},
    },
}

_CS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "lam_correct": {"type": "number"},
        "kernel_correct": _KERNEL_SCHEMA,
        "lam_smooth": {"type": ["number", "null"]},
        "kernel_smooth": _KERNEL_SCHEMA,
        "num_propagation": {"type": "integer", "minimum": 1},
        "scale": {"type": ["number", "string"]},
        "correct_enabled": {"type": "boolean"},
    },
}

RUN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dataset", "rosters", "metric", "output_dir"],
    "properties": {
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "required": ["edges", "features", "labels", "split"],
            "properties": {
                "edges": {"type": "string"},
                "features": {"type": "string"},
                "labels": {"type": "string"},
                "split": {"type": "string"},
                "task": {"enum": ["regression", "classification"]},
            },
        },
        "stack": _STACK_SCHEMA,
        "rosters": {"type": "array", "minItems": 1,
                    "items": {"type": "array", "minItems": 1,
                              "items": _MODEL_SCHEMA}},
        "correct_smooth": {"anyOf": [{"type": "null"}, _CS_SCHEMA]},
        "metric": {"enum": ["mse", "accuracy"]},
        "output_dir": {"type": "string"},
        "seed": {"type": "integer"},
        "workers": {"type": "integer", "minimum": 1},
        "ablation": {
            "type": "object",
            "additionalProperties": False,
            "required": ["t_values"],
            "properties": {
                "t_values": {"type": "array", "minItems": 1,
                             "items": {"type": "integer", "minimum": 0}},
                "seeds": {"type": "array", "minItems": 1,
                          "items": {"type": "integer"}},
            },
        },
    },
}

LEAKLAB_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "num_configs": {"type": "integer", "minimum": 1},
        "num_nodes": {"type": "integer", "minimum": 4},
        "edge_prob": {"type": "number"},
        "order": {"type": "number", "exclusiveMinimum": 1},
        "trials": {"type": "integer", "minimum": 1000},
        "seed": {"type": "integer"},
        "gmrf_alpha_range": {"type": "array", "minItems": 2, "maxItems": 2,
                             "items": {"type": "number"}},
        "gmrf_beta_range": {"type": "array", "minItems": 2, "maxItems": 2,
                            "items": {"type": "number"}},
        "model": _MODEL_SCHEMA,
        "clip": {"type": "boolean"},
        "output_dir": {"type": "string"},
        "write_raw_samples": {"type": "boolean"},
    },
}

LEAKLAB_DEFAULTS = {
    "num_configs": 10,
    "num_nodes": 12,
    "edge_prob": 0.35,
    "order": 2.0,
    "trials": 1500,
    "seed": 0,
    "gmrf_alpha_range": [1.5, 3.0],
    "gmrf_beta_range": [0.5, 2.0],
    "model": {"family": "ridge_linear",
              "hyperparameters": {"fixed_coef": 0.2, "alpha": 0.0}},
    "clip": True,
    "output_dir": ".",
    "write_raw_samples": False,
}


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _validated(raw, schema, path):
    try:
        jsonschema.validate(raw, schema)
    except jsonschema.ValidationError as exc:
        location = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: at {location}: {exc.message}") from exc
    return raw


@dataclass(frozen=True)
class RunConfig:
    """Validated pipeline run description."""

    dataset_paths: dict
    task: str | None
    stack: StackConfig
    rosters: list
    cs_config: CSConfig | None
    metric: str
    output_dir: str
    workers: int
    ablation: dict | None
    raw: dict

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        raw = _validated(_load_json(path), RUN_SCHEMA, path)
        base = os.path.dirname(os.path.abspath(path))

        def resolve(p):
            return p if os.path.isabs(p) else os.path.join(base, p)

        ds = raw["dataset"]
        dataset_paths = {k: resolve(ds[k])
                         for k in ("edges", "features", "labels", "split")}
        stack_dict = dict(raw.get("stack", {}))
        if "seed" in raw:
            stack_dict["seed"] = raw["seed"]
        stack = StackConfig.from_dict(stack_dict)
        rosters = [[ModelSpec.from_dict(m) for m in layer]
                   for layer in raw["rosters"]]
        if len(rosters) != stack.num_layers:
            raise ConfigError(
                f"{path}: rosters lists {len(rosters)} layers but "
                f"stack.num_layers is {stack.num_layers}")
        cs_raw = raw.get("correct_smooth")
        cs_config = None if cs_raw is None else CSConfig.from_dict(cs_raw)
        metric = raw["metric"]
        task = ds.get("task")
        if task is None:
            task = "regression" if metric == "mse" else "classification"
        ablation = raw.get("ablation")
        if ablation is not None:
            ablation = {"t_values": list(ablation["t_values"]),
                        "seeds": list(ablation.get("seeds", [0, 1, 2, 3, 4]))}
        return cls(dataset_paths, task, stack, rosters, cs_config, metric,
                   resolve(raw["output_dir"]), int(raw.get("workers", 1)),
                   ablation, raw)


def load_leaklab_config(path) -> dict:
    raw = _validated(_load_json(path), LEAKLAB_SCHEMA, path)
    merged = json.loads(json.dumps(LEAKLAB_DEFAULTS))
    merged.update(raw)
    base = os.path.dirname(os.path.abspath(path))
    if not os.path.isabs(merged["output_dir"]):
        merged["output_dir"] = os.path.join(base, merged["output_dir"])
    return merged
