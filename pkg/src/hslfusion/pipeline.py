"""End-to-end orchestration: scene preprocessing, dataset assembly, model
variants, training, evaluation, full-scene map prediction, and model I/O."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .classifier import CoupledCNNClassifier
from .data import (
    RasterScene,
    apply_minmax,
    band_minmax,
    check_pixels_in_bounds,
    extract_patch_batch,
    fit_pca,
)
from .fusion import DecisionWeights
from .metrics import MetricsReport, compute_metrics
from .network import feature_length

CHECKPOINT_VERSION = 1

# variant tag -> model wiring; F-* trains the fused head only, DF-* adds the
# per-branch heads and accuracy-weighted decision fusion
VARIANTS = {
    "CNN-HS": {"branch": "hs", "fusion": None, "decision_fusion": False},
    "CNN-LiDAR": {"branch": "lidar", "fusion": None, "decision_fusion": False},
    "CNN-F-C": {"branch": "both", "fusion": "concat", "decision_fusion": False},
    "CNN-F-M": {"branch": "both", "fusion": "max", "decision_fusion": False},
    "CNN-F-S": {"branch": "both", "fusion": "sum", "decision_fusion": False},
    "CNN-DF-C": {"branch": "both", "fusion": "concat", "decision_fusion": True},
    "CNN-DF-M": {"branch": "both", "fusion": "max", "decision_fusion": True},
    "CNN-DF-S": {"branch": "both", "fusion": "sum", "decision_fusion": True},
}


def variant_config(tag: str) -> dict:
    if tag not in VARIANTS:
        raise ValueError(f"unknown variant {tag!r}; choose from {sorted(VARIANTS)}")
    return dict(VARIANTS[tag])


@dataclass
class ScenePreprocessor:
    """Fitted scene-to-feature transform: PCA reduction of the spectra plus
    per-band min-max scaling of the reduced planes and the LiDAR band.

    Projection runs in float32 with the stored float32 components, so
    features recomputed after a checkpoint round-trip match bit for bit.
    """

    pca_mean: np.ndarray        # (b,)
    pca_components: np.ndarray  # (k, b)
    hsi_min: np.ndarray         # (k,)
    hsi_max: np.ndarray
    lidar_min: np.ndarray       # (1,)
    lidar_max: np.ndarray

    @property
    def n_components(self) -> int:
        return self.pca_components.shape[0]

    @classmethod
    def fit(cls, scene: RasterScene, n_components: int) -> "ScenePreprocessor":
        reducer = fit_pca(scene, n_components)
        mean = reducer.mean_.astype(np.float32)
        components = reducer.components_.astype(np.float32)
        planes = cls._project(scene, mean, components)
        hsi_min, hsi_max = band_minmax(planes)
        lidar_min, lidar_max = band_minmax(scene.lidar)
        return cls(pca_mean=mean, pca_components=components,
                   hsi_min=hsi_min, hsi_max=hsi_max,
                   lidar_min=lidar_min, lidar_max=lidar_max)

    @staticmethod
    def _project(scene: RasterScene, mean, components) -> np.ndarray:
        flat = scene.hsi.reshape(-1, scene.band_count)
        reduced = (flat - mean[None, :]) @ components.T
        return reduced.reshape(scene.height, scene.width, -1)

    def transform(self, scene: RasterScene) -> tuple[np.ndarray, np.ndarray]:
        """(m, n, k) reduced planes and the (m, n) LiDAR band, both scaled."""
        if scene.band_count != self.pca_mean.shape[0]:
            raise ValueError(
                f"scene has {scene.band_count} bands, preprocessor expects {self.pca_mean.shape[0]}")
        planes = self._project(scene, self.pca_mean, self.pca_components)
        planes = apply_minmax(planes, self.hsi_min, self.hsi_max)
        lidar = apply_minmax(scene.lidar, self.lidar_min, self.lidar_max)
        return planes.astype(np.float32), lidar.astype(np.float32)

    def named_buffers(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("pre.pca_mean", self.pca_mean),
            ("pre.pca_components", self.pca_components),
            ("pre.hsi_min", self.hsi_min),
            ("pre.hsi_max", self.hsi_max),
            ("pre.lidar_min", self.lidar_min),
            ("pre.lidar_max", self.lidar_max),
        ]


def build_patch_matrix(planes, lidar, pixels, patch_size: int):
    """Flattened patch-pair rows for the given pixel centers.

    ``pixels`` is (n, 3) of (row, col, class_id) or (n, 2) without labels.
    Returns (X, y); y is None when labels are absent.
    """
    planes = np.asarray(planes, dtype=np.float32)
    lidar = np.asarray(lidar, dtype=np.float32)
    pixels = np.asarray(pixels)
    check_pixels_in_bounds(pixels, planes.shape[0], planes.shape[1])
    rows, cols = pixels[:, 0], pixels[:, 1]
    hs = extract_patch_batch(planes, rows, cols, patch_size)      # (n, p, p, k)
    xl = extract_patch_batch(lidar, rows, cols, patch_size)       # (n, p, p)
    n = len(pixels)
    xh = hs.transpose(0, 3, 1, 2).reshape(n, -1)
    X = np.concatenate([xh, xl.reshape(n, -1)], axis=1).astype(np.float32)
    y = pixels[:, 2].copy() if pixels.shape[1] >= 3 else None
    return X, y


@dataclass
class TrainedModel:
    """A fitted classifier plus the scene preprocessing it was trained with."""

    clf: CoupledCNNClassifier
    pre: ScenePreprocessor
    variant: str | None = None
    meta: dict = field(default_factory=dict)


def train_model(scene: RasterScene, train_pixels, *, variant: str | None = None,
                n_components: int = 20, patch_size: int = 11,
                widths=(32, 64, 128), fusion: str = "sum",
                decision_fusion: bool = True, branch: str = "both",
                coupled: bool = True, lambda1: float = 0.01, lambda2: float = 0.01,
                batch_size: int = 64, learning_rate: float = 0.001,
                epochs: int = 200, seed: int = 0) -> TrainedModel:
    """Fit preprocessing on the scene and train one model on the labeled pixels."""
    if variant is not None:
        wiring = variant_config(variant)
        branch = wiring["branch"]
        decision_fusion = wiring["decision_fusion"]
        if wiring["fusion"] is not None:
            fusion = wiring["fusion"]
    pre = ScenePreprocessor.fit(scene, n_components)
    planes, lidar = pre.transform(scene)
    X, y = build_patch_matrix(planes, lidar, train_pixels, patch_size)
    clf = CoupledCNNClassifier(
        patch_size=patch_size, widths=tuple(widths), branch=branch,
        fusion=fusion, decision_fusion=decision_fusion, coupled=coupled,
        lambda1=lambda1, lambda2=lambda2, batch_size=batch_size,
        learning_rate=learning_rate, epochs=epochs, seed=seed)
    clf.fit(X, y)
    return TrainedModel(clf=clf, pre=pre, variant=variant,
                        meta={"band_count": int(scene.band_count)})


def evaluate_model(model: TrainedModel, scene: RasterScene, test_pixels,
                   decision_fusion: bool | None = None) -> MetricsReport:
    """Metrics of the model on labeled test pixels of a scene."""
    planes, lidar = model.pre.transform(scene)
    X, y_true = build_patch_matrix(planes, lidar, test_pixels, model.clf.patch_size)
    y_pred = model.clf.predict(X, decision_fusion=decision_fusion)
    return compute_metrics(y_true, y_pred, model.clf.classes_)


def predict_map(model: TrainedModel, scene: RasterScene, batch: int = 2048,
                decision_fusion: bool | None = None) -> np.ndarray:
    """Classify every pixel of the scene; returns an (m, n) class-id map."""
    planes, lidar = model.pre.transform(scene)
    m, n = scene.height, scene.width
    grid = np.stack(np.meshgrid(np.arange(m), np.arange(n), indexing="ij"), axis=-1).reshape(-1, 2)
    out = np.empty(m * n, dtype=np.int32)
    for start in range(0, len(grid), batch):
        chunk = grid[start:start + batch]
        X, _ = build_patch_matrix(planes, lidar, chunk, model.clf.patch_size)
        out[start:start + len(chunk)] = model.clf.predict(X, decision_fusion=decision_fusion)
    return out.reshape(m, n)


# ---------------------------------------------------------------------------
# model persistence


def _model_buffers(model: TrainedModel) -> list[tuple[str, np.ndarray]]:
    clf = model.clf
    buffers = [(name, t.data) for name, t in clf.extractor_.named_parameters()]
    buffers += clf.extractor_.named_buffers()
    buffers += [(f"{name}.weight", clf.heads_[name].data) for name in sorted(clf.heads_)]
    if clf.decision_weights_ is not None:
        buffers.append(("decision.u", clf.decision_weights_.u))
        buffers.append(("decision.accuracy", clf.decision_weights_.accuracy))
    buffers += model.pre.named_buffers()
    return buffers


def save_model(path, model: TrainedModel) -> None:
    clf = model.clf
    config = {
        "format_version": CHECKPOINT_VERSION,
        "variant": model.variant,
        "branch": clf.branch,
        "fusion": clf.fusion,
        "decision_fusion": clf.decision_fusion,
        "coupled": clf.coupled,
        "patch_size": clf.patch_size,
        "widths": list(clf.widths),
        "n_components": int(clf.n_components_),
        "n_classes": int(len(clf.classes_)),
        "class_ids": [int(c) for c in clf.classes_],
        "lambda1": clf.lambda1,
        "lambda2": clf.lambda2,
        "batch_size": clf.batch_size,
        "learning_rate": clf.learning_rate,
        "epochs": clf.epochs,
        "seed": clf.seed,
        "n_features_in": int(clf.n_features_in_),
        "band_count": model.meta.get("band_count"),
    }
    save_checkpoint(path, config, _model_buffers(model))


def load_model(path) -> TrainedModel:
    config, buffers = load_checkpoint(path)
    clf = CoupledCNNClassifier(
        patch_size=config["patch_size"], widths=tuple(config["widths"]),
        branch=config["branch"],
        fusion=config["fusion"] if config["fusion"] else "sum",
        decision_fusion=config["decision_fusion"], coupled=config["coupled"],
        lambda1=config["lambda1"], lambda2=config["lambda2"],
        batch_size=config["batch_size"], learning_rate=config["learning_rate"],
        epochs=config["epochs"], seed=config["seed"])
    rng = np.random.default_rng(config["seed"])
    clf.config_, clf.extractor_, clf.heads_ = clf._assemble(
        config["n_components"], config["n_classes"], rng)
    for name, t in clf.extractor_.named_parameters():
        t.data[...] = buffers[name]
    for name, buf in clf.extractor_.named_buffers():
        buf[...] = buffers[name]
    for name in sorted(clf.heads_):
        clf.heads_[name].data[...] = buffers[f"{name}.weight"]
    clf.classes_ = np.asarray(config["class_ids"], dtype=np.int64)
    clf.n_features_in_ = config["n_features_in"]
    clf.n_components_ = config["n_components"]
    clf.feature_length_ = feature_length(clf.config_)
    clf.train_log_ = []
    clf.decision_weights_ = None
    if "decision.u" in buffers:
        clf.decision_weights_ = DecisionWeights(
            u=buffers["decision.u"].astype(np.float64),
            accuracy=buffers["decision.accuracy"].astype(np.float64))
    pre = ScenePreprocessor(
        pca_mean=buffers["pre.pca_mean"],
        pca_components=buffers["pre.pca_components"],
        hsi_min=buffers["pre.hsi_min"],
        hsi_max=buffers["pre.hsi_max"],
        lidar_min=buffers["pre.lidar_min"],
        lidar_max=buffers["pre.lidar_max"])
    return TrainedModel(clf=clf, pre=pre, variant=config.get("variant"),
                        meta={"band_count": config.get("band_count")})
