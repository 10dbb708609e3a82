"""Scikit-learn style classifier over hyperspectral/LiDAR patch pairs.

Each sample row of ``X`` is a flattened patch pair: ``k * p * p``
hyperspectral values in channel-major order followed by ``p * p`` LiDAR
values, where ``p`` is the configured patch size and ``k`` is inferred
from the row length. ``pipeline.build_patch_matrix`` produces this layout
from a raster scene.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, column_or_1d

from . import autograd as ag
from . import fusion as fu
from .autograd import Tensor, no_grad
from .data import shuffled_batches
from .network import (
    BRANCHES,
    CoupledExtractor,
    NetworkConfig,
    feature_length,
    kaiming_uniform,
)
from .optim import Adam

MODEL_BRANCHES = ("both",) + BRANCHES


@dataclass
class LossBreakdown:
    """The three head losses and their weighted combination."""

    l1: float
    l2: float
    l3: float
    total: float


def composite_loss(y1, y2, y3, target, lambda1: float, lambda2: float):
    """lambda1*L1 + lambda2*L2 + L3 over the three head outputs.

    Returns the combined loss tensor plus the detached breakdown.
    """
    loss1 = ag.bce_loss(y1, target)
    loss2 = ag.bce_loss(y2, target)
    loss3 = ag.bce_loss(y3, target)
    total = ag.add(ag.add(ag.scale(loss1, lambda1), ag.scale(loss2, lambda2)), loss3)
    return total, LossBreakdown(loss1.item(), loss2.item(), loss3.item(), total.item())


class CoupledCNNClassifier(ClassifierMixin, BaseEstimator):
    """Patch-pair classifier with coupled conv branches and two-stage fusion.

    The two branches share their last two conv blocks when ``coupled``.
    With ``branch="both"`` the branch features are fused (``fusion``) and
    classified by a softmax head; ``decision_fusion`` adds per-branch heads
    whose outputs are combined at prediction time by per-class weights
    derived from training accuracy. ``branch="hs"``/``"lidar"`` trains a
    single-modality baseline with one head.

    Training is Adam over shuffled mini-batches of the element-wise binary
    cross-entropy, deterministically seeded.
    """

    def __init__(self, patch_size=11, widths=(32, 64, 128), branch="both",
                 fusion="sum", decision_fusion=True, coupled=True,
                 lambda1=0.01, lambda2=0.01, batch_size=64,
                 learning_rate=0.001, epochs=200, seed=0):
        self.patch_size = patch_size
        self.widths = widths
        self.branch = branch
        self.fusion = fusion
        self.decision_fusion = decision_fusion
        self.coupled = coupled
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.seed = seed

    # ------------------------------------------------------------------
    # assembly

    def _check_hyperparams(self):
        if self.branch not in MODEL_BRANCHES:
            raise ValueError(f"branch must be one of {MODEL_BRANCHES}, got {self.branch!r}")
        if self.branch == "both" and self.fusion not in fu.STRATEGIES:
            raise ValueError(
                f"fusion must be one of {fu.STRATEGIES}, got {self.fusion!r}")
        if self.branch != "both" and self.decision_fusion:
            raise ValueError("decision fusion needs both branches")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        for name in ("lambda1", "lambda2", "learning_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def _split_blocks(self, X):
        p = self.patch_size
        pp = p * p
        if X.shape[1] % pp != 0 or X.shape[1] // pp < 2:
            raise ValueError(
                f"row length {X.shape[1]} is not (k + 1) * {pp} for patch size {p}")
        k = X.shape[1] // pp - 1
        xh = X[:, :k * pp].reshape(-1, k, p, p)
        xl = X[:, k * pp:].reshape(-1, 1, p, p)
        return xh, xl

    def _assemble(self, k: int, n_classes: int, rng: np.random.Generator):
        config = NetworkConfig(
            in_channels=k,
            patch_size=self.patch_size,
            widths=tuple(self.widths),
            n_classes=n_classes,
            coupled=self.coupled,
        )
        extractor = CoupledExtractor(config, rng)
        d = feature_length(config)
        heads: dict[str, Tensor] = {}
        if self.branch == "both":
            if self.decision_fusion:
                heads["head1"] = Tensor(kaiming_uniform(rng, (n_classes, d), d), requires_grad=True)
                heads["head2"] = Tensor(kaiming_uniform(rng, (n_classes, d), d), requires_grad=True)
            d3 = fu.fused_length(d, self.fusion)
            heads["head3"] = Tensor(kaiming_uniform(rng, (n_classes, d3), d3), requires_grad=True)
        else:
            heads["head"] = Tensor(kaiming_uniform(rng, (n_classes, d), d), requires_grad=True)
        return config, extractor, heads

    def _forward_heads(self, xh, xl, training: bool) -> dict[str, Tensor]:
        """Class distributions of every active head for one batch."""
        out = {}
        if self.branch == "both":
            f_h = self.extractor_.forward(xh, "hs", training)
            f_l = self.extractor_.forward(xl, "lidar", training)
            if self.decision_fusion:
                out["y1"] = fu.head_forward(f_h, self.heads_["head1"])
                out["y2"] = fu.head_forward(f_l, self.heads_["head2"])
            fused = fu.fuse_features(f_h, f_l, self.fusion)
            out["y3"] = fu.head_forward(fused, self.heads_["head3"])
        elif self.branch == "hs":
            out["y"] = fu.head_forward(self.extractor_.forward(xh, "hs", training), self.heads_["head"])
        else:
            out["y"] = fu.head_forward(self.extractor_.forward(xl, "lidar", training), self.heads_["head"])
        return out

    @staticmethod
    def _primary(outs: dict) -> Tensor:
        return outs["y3"] if "y3" in outs else outs["y"]

    # ------------------------------------------------------------------
    # training

    def fit(self, X, y):
        self._check_hyperparams()
        X = check_array(X, dtype=np.float32, order="C")
        y = column_or_1d(y, warn=True)
        classes, y_idx = np.unique(y, return_inverse=True)
        if len(classes) < 2:
            raise ValueError(f"training labels hold {len(classes)} class(es), need >= 2")
        n_classes = len(classes)
        n = X.shape[0]

        rng = np.random.default_rng(self.seed)
        xh_all, xl_all = self._split_blocks(X)
        k = xh_all.shape[1]
        self.config_, self.extractor_, self.heads_ = self._assemble(k, n_classes, rng)
        params = self.extractor_.parameters() + [self.heads_[h] for h in sorted(self.heads_)]
        optimizer = Adam(params, lr=self.learning_rate)

        log = []
        for epoch in range(self.epochs):
            sums = np.zeros(4)  # L, L1, L2, L3 weighted by batch size
            correct = 0
            for idx in shuffled_batches(n, self.batch_size, rng):
                xh = Tensor(xh_all[idx])
                xl = Tensor(xl_all[idx])
                target = np.zeros((len(idx), n_classes), dtype=np.float32)
                target[np.arange(len(idx)), y_idx[idx]] = 1.0

                outs = self._forward_heads(xh, xl, training=True)
                if self.branch == "both" and self.decision_fusion:
                    loss, parts = composite_loss(
                        outs["y1"], outs["y2"], outs["y3"], target, self.lambda1, self.lambda2)
                else:
                    loss = ag.bce_loss(self._primary(outs), target)
                    v = loss.item()
                    parts = LossBreakdown(0.0, 0.0, v, v)
                if not np.isfinite(parts.total):
                    raise RuntimeError(
                        f"non-finite training loss {parts.total} at epoch {epoch}; aborting")
                loss.backward()
                optimizer.step()
                optimizer.zero_grad()

                w = len(idx)
                sums += w * np.array([parts.total, parts.l1, parts.l2, parts.l3])
                batch_pred = np.argmax(self._primary(outs).data, axis=1)
                correct += int((batch_pred == y_idx[idx]).sum())
            log.append({
                "epoch": epoch,
                "L": sums[0] / n,
                "L1": sums[1] / n,
                "L2": sums[2] / n,
                "L3": sums[3] / n,
                "train_OA": correct / n,
            })

        self.classes_ = classes
        self.n_features_in_ = X.shape[1]
        self.n_components_ = k
        self.feature_length_ = feature_length(self.config_)
        self.train_log_ = log
        self.decision_weights_ = None
        if self.branch == "both" and self.decision_fusion:
            scores = self._batched_scores(X)
            preds = [np.argmax(scores[h], axis=1) for h in ("y1", "y2", "y3")]
            self.decision_weights_ = fu.compute_decision_weights(preds, y_idx, n_classes)
        return self

    # ------------------------------------------------------------------
    # inference

    def _batched_scores(self, X, batch: int = 512) -> dict[str, np.ndarray]:
        """Inference-mode head outputs over all of X."""
        xh_all, xl_all = self._split_blocks(X)
        chunks: dict[str, list] = {}
        with no_grad():
            for start in range(0, X.shape[0], batch):
                sl = slice(start, start + batch)
                outs = self._forward_heads(Tensor(xh_all[sl]), Tensor(xl_all[sl]), training=False)
                for name, t in outs.items():
                    chunks.setdefault(name, []).append(t.data)
        return {name: np.concatenate(parts, axis=0) for name, parts in chunks.items()}

    def _check_input(self, X):
        check_is_fitted(self, "classes_")
        X = check_array(X, dtype=np.float32, order="C")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, the model was fitted with {self.n_features_in_}")
        return X

    def predict_heads(self, X) -> dict[str, np.ndarray]:
        """Per-head class distributions (``y1``/``y2``/``y3`` or ``y``)."""
        return self._batched_scores(self._check_input(X))

    def decision_function(self, X, decision_fusion=None) -> np.ndarray:
        """Scores used for prediction: the weighted head combination when
        decision fusion is active, otherwise the fused-feature head output.

        ``decision_fusion`` overrides the fitted setting (only meaningful on
        a model trained with all three heads).
        """
        X = self._check_input(X)
        scores = self._batched_scores(X)
        use_df = self.decision_weights_ is not None if decision_fusion is None else decision_fusion
        if use_df:
            if self.decision_weights_ is None:
                raise ValueError("model was trained without decision fusion")
            return fu.decision_fuse(
                scores["y1"], scores["y2"], scores["y3"], self.decision_weights_.u)
        return scores["y3"] if "y3" in scores else scores["y"]

    def predict(self, X, decision_fusion=None) -> np.ndarray:
        scores = self.decision_function(X, decision_fusion=decision_fusion)
        return self.classes_[np.argmax(scores, axis=1)]
