"""Stacked, bagged ensembles of IID models fused with graph propagation.

The package trains arbitrary tabular/text models on graph node data by
repeated k-fold bagging, propagates their out-of-fold predictions over
the graph, stacks further model layers on the smoothed predictions, and
combines the top layer by greedy ensemble selection, with optional
correct-and-smooth post-processing.  A small lab for measuring label
leakage of the bagged/unbagged prediction functionals is included.
"""

from graphstack.backend import backend_name
from graphstack.bagging import FoldPlan, OOFMatrix, make_fold_plan, run_bagged_training
from graphstack.correct_smooth import CSConfig, correct_and_smooth
from graphstack.dataset_io import Dataset, evaluate, load_dataset
from graphstack.ensemble import EnsembleWeights, select
from graphstack.graph import Graph, read_edge_list
from graphstack.kernels import KernelSpec, SparseOperator, build_kernel
from graphstack.leakage import (
    GMRFModel,
    bagged_functional,
    conditional_gaussian,
    leakage_experiment,
    sample_gmrf,
    unbagged_functional,
)
from graphstack.models import ModelSpec, TrainedModel, encode_features, list_layer_models, train
from graphstack.propagation import (
    PredictionFrame,
    PropagationConfig,
    closed_form_solve,
    energy,
    gradient_step,
    laplacian_lambda_max,
    propagate,
)
from graphstack.stacking import (
    FinalPredictor,
    LayerState,
    StackConfig,
    ablation_run,
    run_layer,
    run_pipeline,
)
from graphstack.tables import FeatureTable, LabelTable

__version__ = "0.1.0"

__all__ = [
    "CSConfig",
    "Dataset",
    "EnsembleWeights",
    "FeatureTable",
    "FinalPredictor",
    "FoldPlan",
    "GMRFModel",
    "Graph",
    "KernelSpec",
    "LabelTable",
    "LayerState",
    "ModelSpec",
    "OOFMatrix",
    "PredictionFrame",
    "PropagationConfig",
    "SparseOperator",
    "StackConfig",
    "TrainedModel",
    "ablation_run",
    "backend_name",
    "bagged_functional",
    "build_kernel",
    "closed_form_solve",
    "conditional_gaussian",
    "correct_and_smooth",
    "encode_features",
    "energy",
    "evaluate",
    "gradient_step",
    "laplacian_lambda_max",
    "leakage_experiment",
    "list_layer_models",
    "load_dataset",
    "make_fold_plan",
    "propagate",
    "read_edge_list",
    "run_bagged_training",
    "run_layer",
    "run_pipeline",
    "sample_gmrf",
    "select",
    "train",
    "unbagged_functional",
    "__version__",
]
