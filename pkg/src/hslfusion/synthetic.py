"""Deterministic synthetic scenes with controlled modality ambiguity.

Class regions are a block grid. Spectra are smooth single-bump curves over
the band axis, heights are per-class constants, both with Gaussian noise.
One class pair shares its spectrum (separable only by height) and, for 3+
classes, one pair shares its height (separable only by spectrum), so
single-modality models hit a ceiling that fused models clear.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import RasterScene

SPECTRAL_TWINS = (1, 2)  # same spectrum, different heights


def height_twins(n_classes: int):
    """The class pair sharing a height, or None when n_classes == 2."""
    if n_classes >= 4:
        return (3, 4)
    if n_classes == 3:
        return (2, 3)
    return None


@dataclass
class SyntheticScene:
    scene: RasterScene
    truth: np.ndarray         # (m, n) class ids 1..C, every pixel labeled
    train_pixels: np.ndarray  # (n_train, 3) of (row, col, class_id)
    test_pixels: np.ndarray
    params: dict = field(default_factory=dict)


def generate_synthetic_scene(n_classes: int = 4, height: int = 64, width: int = 64,
                             n_bands: int = 30, seed: int = 0,
                             noise_hsi: float = 0.02, noise_lidar: float = 0.02,
                             block_size: int = 16, margin: int = 5,
                             train_per_class: int = 40, test_per_class: int = 60
                             ) -> SyntheticScene:
    """Build a labeled scene plus disjoint train/test pixel lists.

    Sampled pixels keep ``margin`` pixels of their own block around them so
    that patches up to 2*margin+1 wide see a single class.
    """
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    if n_bands < 4:
        raise ValueError(f"need at least 4 bands, got {n_bands}")
    if height < block_size or width < block_size:
        raise ValueError(f"scene {height}x{width} smaller than one {block_size}px block")
    if block_size <= 2 * margin:
        raise ValueError(f"block size {block_size} leaves no interior at margin {margin}")
    nbi, nbj = height // block_size, width // block_size
    if nbi * nbj < n_classes:
        raise ValueError(
            f"{nbi * nbj} blocks cannot host {n_classes} classes; enlarge the scene")

    block_row = np.minimum(np.arange(height) // block_size, nbi - 1)
    block_col = np.minimum(np.arange(width) // block_size, nbj - 1)
    truth = ((block_row[:, None] * nbj + block_col[None, :]) % n_classes + 1).astype(np.int32)

    # class -> spectral signature index; the twin pair shares signature 0
    sig_of_class = np.arange(n_classes)
    sig_of_class[SPECTRAL_TWINS[1] - 1] = sig_of_class[SPECTRAL_TWINS[0] - 1]
    sig_ids, sig_of_class = np.unique(sig_of_class, return_inverse=True)
    n_sigs = len(sig_ids)

    lam = np.linspace(0.0, 1.0, n_bands)
    centers = np.linspace(0.15, 0.85, n_sigs)
    sigma = 0.08
    signatures = 0.2 + np.exp(-((lam[None, :] - centers[:, None]) ** 2) / (2 * sigma ** 2))

    heights = 0.3 + 0.45 * np.arange(n_classes)
    h_twins = height_twins(n_classes)
    if h_twins is not None:
        heights[h_twins[1] - 1] = heights[h_twins[0] - 1]

    rng = np.random.default_rng(seed)
    hsi = signatures[sig_of_class[truth - 1]] + rng.normal(0.0, noise_hsi, (height, width, n_bands))
    lidar = heights[truth - 1] + rng.normal(0.0, noise_lidar, (height, width))
    scene = RasterScene(hsi=hsi.astype(np.float32), lidar=lidar.astype(np.float32))

    interior_r = (np.arange(height) % block_size >= margin) \
        & (np.arange(height) % block_size < block_size - margin) \
        & (np.arange(height) < nbi * block_size)
    interior_c = (np.arange(width) % block_size >= margin) \
        & (np.arange(width) % block_size < block_size - margin) \
        & (np.arange(width) < nbj * block_size)
    interior = interior_r[:, None] & interior_c[None, :]

    train_rows, test_rows = [], []
    for cid in range(1, n_classes + 1):
        candidates = np.argwhere(interior & (truth == cid))
        needed = train_per_class + test_per_class
        if len(candidates) < needed:
            raise ValueError(
                f"class {cid} has only {len(candidates)} interior pixels, needs {needed}")
        picked = candidates[rng.permutation(len(candidates))[:needed]]
        for r, c in picked[:train_per_class]:
            train_rows.append((r, c, cid))
        for r, c in picked[train_per_class:]:
            test_rows.append((r, c, cid))

    params = {
        "n_classes": n_classes,
        "height": height,
        "width": width,
        "n_bands": n_bands,
        "seed": seed,
        "noise_hsi": noise_hsi,
        "noise_lidar": noise_lidar,
        "block_size": block_size,
        "margin": margin,
        "train_per_class": train_per_class,
        "test_per_class": test_per_class,
        "spectral_twins": list(SPECTRAL_TWINS),
        "height_twins": list(h_twins) if h_twins else None,
        "class_heights": heights.tolist(),
    }
    return SyntheticScene(
        scene=scene,
        truth=truth,
        train_pixels=np.asarray(train_rows, dtype=np.int64),
        test_pixels=np.asarray(test_rows, dtype=np.int64),
        params=params,
    )
