"""Confusion-matrix classification metrics: per-class accuracy, OA, AA, Cohen's kappa."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MetricsReport:
    confusion: np.ndarray   # (C, C) counts, rows = truth, cols = predicted
    per_class: np.ndarray   # (C,) accuracy per true class (nan when unsampled)
    oa: float
    aa: float
    kappa: float
    class_ids: np.ndarray   # the original labels, in confusion-matrix order

    def to_dict(self) -> dict:
        per_class = [None if np.isnan(v) else float(v) for v in self.per_class]
        return {
            "class_ids": [int(c) for c in self.class_ids],
            "confusion": self.confusion.tolist(),
            "per_class_accuracy": per_class,
            "oa": float(self.oa),
            "aa": float(self.aa),
            "kappa": float(self.kappa),
        }


def confusion_matrix(truth_idx, pred_idx, n_classes: int) -> np.ndarray:
    truth_idx = np.asarray(truth_idx)
    pred_idx = np.asarray(pred_idx)
    if truth_idx.shape != pred_idx.shape:
        raise ValueError("truth and prediction vectors differ in length")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (truth_idx, pred_idx), 1)
    return cm


def kappa(confusion) -> float:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e).

    The p_e == 1 case is defined only when agreement is also perfect.
    """
    cm = np.asarray(confusion, dtype=np.float64)
    total = cm.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    p_o = np.trace(cm) / total
    p_e = float((cm.sum(axis=1) * cm.sum(axis=0)).sum()) / total ** 2
    if p_e == 1.0:
        if p_o == 1.0:
            return 1.0
        raise ValueError("kappa undefined: chance agreement is 1 without perfect agreement")
    return float((p_o - p_e) / (1.0 - p_e))


def compute_metrics(y_true, y_pred, class_ids) -> MetricsReport:
    """Metrics from raw label vectors. Labels must come from ``class_ids``."""
    class_ids = np.asarray(class_ids)
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    ti = np.searchsorted(class_ids, y_true)
    pi = np.searchsorted(class_ids, y_pred)
    for name, labels, idx in (("truth", y_true, ti), ("prediction", y_pred, pi)):
        bad = (idx >= len(class_ids)) | (class_ids[np.clip(idx, 0, len(class_ids) - 1)] != labels)
        if bad.any():
            raise ValueError(
                f"{name} labels {sorted(set(np.asarray(labels)[bad].tolist()))} "
                f"are not among the trained classes")
    cm = confusion_matrix(ti, pi, len(class_ids))
    support = cm.sum(axis=1)
    with np.errstate(invalid="ignore"):
        per_class = np.where(support > 0, np.diag(cm) / np.maximum(support, 1), np.nan)
    oa = float(np.trace(cm) / cm.sum())
    aa = float(np.nanmean(per_class))
    return MetricsReport(
        confusion=cm,
        per_class=per_class,
        oa=oa,
        aa=aa,
        kappa=kappa(cm),
        class_ids=class_ids,
    )
