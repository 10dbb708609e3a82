"""Feature-level fusion, softmax output heads, and accuracy-weighted decision fusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor

STRATEGIES = ("concat", "max", "sum")

# smoothing constant in the per-class weight ratio
WEIGHT_EPS = 1e-5


def fused_length(feature_len: int, strategy: str) -> int:
    if strategy not in STRATEGIES:
        raise ValueError(f"fusion strategy must be one of {STRATEGIES}, got {strategy!r}")
    return 2 * feature_len if strategy == "concat" else feature_len


def fuse_features(r_h: Tensor, r_l: Tensor, strategy: str) -> Tensor:
    """Combine the two branch features: sum, element-wise max, or concatenation."""
    if strategy == "sum":
        return ag.add(r_h, r_l)
    if strategy == "max":
        return ag.elem_max(r_h, r_l)
    if strategy == "concat":
        return ag.concat(r_h, r_l, axis=-1)
    raise ValueError(f"fusion strategy must be one of {STRATEGIES}, got {strategy!r}")


def head_forward(features, weight) -> Tensor:
    """Class distribution of one output head: softmax of a bias-free linear map."""
    return ag.softmax(ag.linear(features, weight))


@dataclass
class DecisionWeights:
    """Per-class combination weights derived from per-head training accuracy.

    ``u`` is (C, 3) with one column per head; ``accuracy`` holds the raw
    per-class training accuracies the weights came from.
    """

    u: np.ndarray
    accuracy: np.ndarray


def compute_decision_weights(head_predictions, truth, n_classes: int) -> DecisionWeights:
    """Weights u_ji = (a_ji + 1e-5) / (a_1i + a_2i + a_3i + 1e-5).

    ``head_predictions`` holds three aligned vectors of predicted class
    indices (0-based); ``truth`` the matching true indices. Every class
    must appear in ``truth``, otherwise its accuracy is undefined.
    """
    truth = np.asarray(truth)
    preds = [np.asarray(p) for p in head_predictions]
    if len(preds) != 3:
        raise ValueError(f"expected predictions from 3 heads, got {len(preds)}")
    accuracy = np.zeros((n_classes, 3), dtype=np.float64)
    for i in range(n_classes):
        mask = truth == i
        if not mask.any():
            raise ValueError(f"class index {i} absent from the training labels")
        for j, p in enumerate(preds):
            accuracy[i, j] = float(np.mean(p[mask] == i))
    totals = accuracy.sum(axis=1, keepdims=True)
    u = (accuracy + WEIGHT_EPS) / (totals + WEIGHT_EPS)
    return DecisionWeights(u=u, accuracy=accuracy)


def decision_fuse(y1, y2, y3, u) -> np.ndarray:
    """Weighted per-class sum of the three head outputs (not renormalized)."""
    y1, y2, y3 = (np.asarray(y) for y in (y1, y2, y3))
    u = np.asarray(u)
    c = y1.shape[-1]
    if y2.shape != y1.shape or y3.shape != y1.shape:
        raise ValueError("head outputs must share one shape")
    if u.shape != (c, 3):
        raise ValueError(f"decision weights must be ({c}, 3), got {u.shape}")
    return y1 * u[:, 0] + y2 * u[:, 1] + y3 * u[:, 2]


def predict_class(scores) -> int:
    """1-based argmax of a fused score vector; exact ties pick the lowest index."""
    scores = np.asarray(scores)
    return int(np.argmax(scores)) + 1
