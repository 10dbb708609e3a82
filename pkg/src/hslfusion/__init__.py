"""Hyperspectral + LiDAR patch classification with coupled convolutional
branches, feature-level fusion, and accuracy-weighted decision fusion."""

from .autograd import GraphConsumedError, RunningStats, ShapeError, Tensor, no_grad
from .classifier import CoupledCNNClassifier, LossBreakdown, composite_loss
from .data import PcaReducer, RasterFormatError, RasterScene, load_scene, read_raster
from .fusion import DecisionWeights, compute_decision_weights, decision_fuse, fuse_features
from .metrics import MetricsReport, compute_metrics, kappa
from .network import CoupledExtractor, NetworkConfig, count_params, feature_length, init_network
from .optim import Adam
from .pipeline import (
    TrainedModel,
    build_patch_matrix,
    evaluate_model,
    load_model,
    predict_map,
    save_model,
    train_model,
    variant_config,
)
from .synthetic import SyntheticScene, generate_synthetic_scene

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "CoupledCNNClassifier",
    "CoupledExtractor",
    "DecisionWeights",
    "GraphConsumedError",
    "LossBreakdown",
    "MetricsReport",
    "NetworkConfig",
    "PcaReducer",
    "RasterFormatError",
    "RasterScene",
    "RunningStats",
    "ShapeError",
    "SyntheticScene",
    "Tensor",
    "TrainedModel",
    "build_patch_matrix",
    "composite_loss",
    "compute_decision_weights",
    "compute_metrics",
    "count_params",
    "decision_fuse",
    "evaluate_model",
    "feature_length",
    "fuse_features",
    "generate_synthetic_scene",
    "init_network",
    "kappa",
    "load_model",
    "load_scene",
    "no_grad",
    "predict_map",
    "read_raster",
    "save_model",
    "train_model",
    "variant_config",
]
