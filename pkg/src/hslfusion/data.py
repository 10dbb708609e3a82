"""Raster I/O, spectral reduction, normalization, patching, and batching.

Raster files come in pairs: a JSON header
``{"height": m, "width": n, "bands": b, "dtype": "f32", "layout": "BSQ"}``
next to a raw little-endian float32 file, band-sequential. Labels are CSV
with the exact header ``row,col,class_id`` (0-based coordinates, class ids
1..C).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted


class RasterFormatError(ValueError):
    """Raster header/data pair is malformed or inconsistent."""


RASTER_DTYPE = "f32"
RASTER_LAYOUT = "BSQ"
LABEL_COLUMNS = ("row", "col", "class_id")


@dataclass
class RasterScene:
    """Co-registered hyperspectral cube (m, n, b) and LiDAR plane (m, n)."""

    hsi: np.ndarray
    lidar: np.ndarray

    def __post_init__(self):
        self.hsi = np.ascontiguousarray(self.hsi, dtype=np.float32)
        self.lidar = np.ascontiguousarray(self.lidar, dtype=np.float32)
        if self.hsi.ndim != 3:
            raise ValueError(f"hsi cube must be 3-d, got shape {self.hsi.shape}")
        if self.lidar.ndim != 2:
            raise ValueError(f"lidar plane must be 2-d, got shape {self.lidar.shape}")
        if self.hsi.shape[:2] != self.lidar.shape:
            raise ValueError(
                f"hsi {self.hsi.shape[:2]} and lidar {self.lidar.shape} do not cover the same area")
        if not (np.isfinite(self.hsi).all() and np.isfinite(self.lidar).all()):
            raise ValueError("raster values must be finite")

    @property
    def height(self) -> int:
        return self.hsi.shape[0]

    @property
    def width(self) -> int:
        return self.hsi.shape[1]

    @property
    def band_count(self) -> int:
        return self.hsi.shape[2]


# ---------------------------------------------------------------------------
# raster and label files


def parse_raster_header(header: dict) -> tuple[int, int, int]:
    """Validate a raster header dict and return (height, width, bands)."""
    for key in ("height", "width", "bands", "dtype", "layout"):
        if key not in header:
            raise RasterFormatError(f"raster header missing key {key!r}")
    if header["dtype"] != RASTER_DTYPE:
        raise RasterFormatError(f"unsupported raster dtype {header['dtype']!r}")
    if header["layout"] != RASTER_LAYOUT:
        raise RasterFormatError(f"unsupported raster layout {header['layout']!r}")
    m, n, b = header["height"], header["width"], header["bands"]
    if not all(isinstance(v, int) and v > 0 for v in (m, n, b)):
        raise RasterFormatError(f"raster extents must be positive integers, got {m}x{n}x{b}")
    return m, n, b


def read_raster(header_path, data_path=None) -> np.ndarray:
    """Load one raster as an (m, n, b) float32 cube.

    The data file defaults to the header's ``data`` entry (resolved next to
    the header), falling back to the header path with a ``.f32`` suffix.
    Fails instead of truncating when the byte count is off.
    """
    header_path = Path(header_path)
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as e:
        raise RasterFormatError(f"malformed raster header {header_path}: {e}") from e
    m, n, b = parse_raster_header(header)
    if data_path is None:
        name = header.get("data", header_path.stem + ".f32")
        data_path = header_path.parent / name
    raw = Path(data_path).read_bytes()
    expected = m * n * b * 4
    if len(raw) != expected:
        raise RasterFormatError(
            f"raster data {data_path} holds {len(raw)} bytes, expected {expected} for {m}x{n}x{b}")
    cube = np.frombuffer(raw, dtype="<f4").reshape(b, m, n).transpose(1, 2, 0)
    return np.ascontiguousarray(cube, dtype=np.float32)


def write_raster(header_path, cube, data_path=None) -> None:
    """Write a raster cube (or a 2-d plane, stored as one band)."""
    header_path = Path(header_path)
    arr = np.asarray(cube, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"raster must be 2-d or 3-d, got shape {arr.shape}")
    m, n, b = arr.shape
    if data_path is None:
        data_path = header_path.parent / (header_path.stem + ".f32")
    data_path = Path(data_path)
    header = {
        "height": m,
        "width": n,
        "bands": b,
        "dtype": RASTER_DTYPE,
        "layout": RASTER_LAYOUT,
        "data": data_path.name,
    }
    header_path.write_text(json.dumps(header, sort_keys=True) + "\n")
    data_path.write_bytes(arr.transpose(2, 0, 1).astype("<f4").tobytes())


def load_scene(hsi_header, lidar_header) -> RasterScene:
    hsi = read_raster(hsi_header)
    lidar = read_raster(lidar_header)
    if lidar.shape[2] != 1:
        raise RasterFormatError(f"lidar raster must have a single band, got {lidar.shape[2]}")
    return RasterScene(hsi=hsi, lidar=lidar[:, :, 0])


def read_labels(path) -> np.ndarray:
    """Read a label CSV into an (n, 3) int array of (row, col, class_id)."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != LABEL_COLUMNS:
            raise ValueError(f"label file {path} must start with header 'row,col,class_id'")
        rows = [[int(v) for v in line] for line in reader if line]
    if not rows:
        raise ValueError(f"label file {path} holds no samples")
    pixels = np.asarray(rows, dtype=np.int64)
    if (pixels[:, 2] < 1).any():
        raise ValueError(f"label file {path} has class ids below 1")
    return pixels


def write_labels(path, pixels) -> None:
    pixels = np.asarray(pixels, dtype=np.int64)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(LABEL_COLUMNS)
        writer.writerows(pixels.tolist())


def check_pixels_in_bounds(pixels, height: int, width: int) -> None:
    pixels = np.asarray(pixels)
    rows, cols = pixels[:, 0], pixels[:, 1]
    if (rows < 0).any() or (rows >= height).any() or (cols < 0).any() or (cols >= width).any():
        raise ValueError(f"label coordinates fall outside the {height}x{width} raster")


# ---------------------------------------------------------------------------
# spectral reduction


class PcaReducer(TransformerMixin, BaseEstimator):
    """Project pixel spectra onto the leading eigenvectors of the band covariance.

    Bands are mean-centered but not variance-standardized (they share
    units). Components are ordered by descending eigenvalue with a
    deterministic sign: the largest-magnitude entry of each component is
    positive.
    """

    def __init__(self, n_components: int = 20):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        n, b = X.shape
        k = self.n_components
        if not 1 <= k <= b:
            raise ValueError(f"n_components must be in [1, {b}], got {k}")
        if n < k + 1:
            raise ValueError(f"need at least {k + 1} pixels to fit {k} components, got {n}")
        self.mean_ = X.mean(axis=0)
        cov = np.atleast_2d(np.cov(X, rowvar=False))
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1][:k]
        components = evecs[:, order].T
        anchor = np.argmax(np.abs(components), axis=1)
        flip = components[np.arange(k), anchor] < 0
        components[flip] *= -1.0
        self.components_ = components
        self.explained_variance_ = np.clip(evals[order], 0.0, None)
        self.n_features_in_ = b
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.mean_.shape[0]:
            raise ValueError(
                f"band count {X.shape[1]} does not match the fitted {self.mean_.shape[0]}")
        return (X - self.mean_) @ self.components_.T

    def inverse_transform(self, Z):
        check_is_fitted(self, "components_")
        Z = check_array(Z, dtype=np.float64)
        return Z @ self.components_ + self.mean_


def fit_pca(scene: RasterScene, n_components: int) -> PcaReducer:
    """Fit the reducer on every pixel spectrum of the scene."""
    flat = scene.hsi.reshape(-1, scene.band_count)
    return PcaReducer(n_components=n_components).fit(flat)


def apply_pca(scene: RasterScene, model: PcaReducer) -> np.ndarray:
    """Project the scene onto the fitted components, as an (m, n, k) cube."""
    flat = scene.hsi.reshape(-1, scene.band_count)
    reduced = model.transform(flat)
    return reduced.reshape(scene.height, scene.width, -1)


# ---------------------------------------------------------------------------
# normalization


def band_minmax(cube) -> tuple[np.ndarray, np.ndarray]:
    """Per-band minima and maxima; a 2-d plane counts as one band."""
    arr = np.asarray(cube)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr.min(axis=(0, 1)), arr.max(axis=(0, 1))


def apply_minmax(cube, mins, maxs) -> np.ndarray:
    """Affine per-band rescale mapping [min, max] to [0, 1]; constant bands map to 0."""
    arr = np.asarray(cube)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    span = np.asarray(maxs, dtype=arr.dtype) - np.asarray(mins, dtype=arr.dtype)
    safe = np.where(span > 0, span, 1.0)
    out = (arr - np.asarray(mins, dtype=arr.dtype)) / safe
    out = np.where(span > 0, out, 0.0).astype(arr.dtype)
    return out[:, :, 0] if squeeze else out


def normalize_bands(cube) -> np.ndarray:
    mins, maxs = band_minmax(cube)
    return apply_minmax(cube, mins, maxs)


# ---------------------------------------------------------------------------
# patches and batches


def _reflect_index(idx, size: int) -> np.ndarray:
    """Mirror out-of-bounds indices across the image edge (no edge repeat)."""
    idx = np.asarray(idx)
    if size == 1:
        return np.zeros_like(idx)
    period = 2 * size - 2
    j = np.mod(idx, period)
    return np.where(j >= size, period - j, j)


def extract_patch(image, row: int, col: int, patch_size: int) -> np.ndarray:
    """A patch_size x patch_size window centered on (row, col), mirror-padded."""
    if patch_size % 2 == 0:
        raise ValueError(f"patch size must be odd, got {patch_size}")
    m, n = image.shape[:2]
    if not (0 <= row < m and 0 <= col < n):
        raise ValueError(f"center ({row}, {col}) outside {m}x{n} raster")
    half = patch_size // 2
    ri = _reflect_index(np.arange(row - half, row + half + 1), m)
    ci = _reflect_index(np.arange(col - half, col + half + 1), n)
    return image[np.ix_(ri, ci)]


def extract_patch_batch(image, rows, cols, patch_size: int) -> np.ndarray:
    """Patches for many centers at once; returns (len(rows), p, p[, bands])."""
    if patch_size % 2 == 0:
        raise ValueError(f"patch size must be odd, got {patch_size}")
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    m, n = image.shape[:2]
    half = patch_size // 2
    off = np.arange(-half, half + 1)
    rr = _reflect_index(rows[:, None] + off[None, :], m)
    cc = _reflect_index(cols[:, None] + off[None, :], n)
    return image[rr[:, :, None], cc[:, None, :]]


def shuffled_batches(n_samples: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """One epoch of index batches: seeded permutation, short final batch kept."""
    if n_samples < 1:
        raise ValueError("empty sample set")
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    perm = rng.permutation(n_samples)
    return [perm[i:i + batch_size] for i in range(0, n_samples, batch_size)]
