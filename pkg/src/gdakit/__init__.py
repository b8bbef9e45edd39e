"""Graph domain adaptation toolkit: simple GNN baselines, distribution
alignment, unsupervised target objectives, and shift diagnostics."""

from .align import AlignmentConfig, lambda_at, median_bandwidth, mmd_value
from .csbm import gen_csbm
from .encoders import EncoderConfig, predict_logits
from .errors import (ConfigError, DegenerateBandwidthError, DivergedRunError,
                     DomainError, GdaError, ShapeError,
                     UndefinedStatisticError, ValidationError)
from .graph import (DomainPair, HeldOutLabels, SparseGraph, edge_homophily,
                    load_graph, save_graph)
from .metrics import auroc, macro_f1, micro_f1
from .shift import ShiftReport, feature_shift, label_shift, shift_report, structure_shift
from .snapshot import load_model, save_model
from .trainer import (ExperimentConfig, Metrics, OptimConfig, RunResult,
                      TrainedModel, evaluate, grid_search, set_seed, train)
from .unsup import UnsupConfig

__version__ = "0.1.0"

__all__ = [
    "AlignmentConfig", "ConfigError", "DegenerateBandwidthError",
    "DivergedRunError", "DomainError", "DomainPair", "EncoderConfig",
    "ExperimentConfig", "GdaError", "HeldOutLabels", "Metrics", "OptimConfig",
    "RunResult", "ShapeError", "ShiftReport", "SparseGraph", "TrainedModel",
    "UndefinedStatisticError", "UnsupConfig", "ValidationError", "auroc",
    "edge_homophily", "evaluate", "feature_shift", "gen_csbm", "grid_search",
    "label_shift", "lambda_at", "load_graph", "load_model", "macro_f1",
    "median_bandwidth", "micro_f1", "mmd_value", "predict_logits",
    "save_graph", "save_model", "set_seed", "shift_report", "structure_shift",
    "train",
]
