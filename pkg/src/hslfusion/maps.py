"""Classification-map rendering as binary (P6) PPM images."""

from __future__ import annotations

import colorsys
from pathlib import Path

import numpy as np

# hand-picked high-contrast colors for the first classes; index 0 stays black
_BASE_COLORS = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 190), (0, 128, 128), (170, 110, 40),
    (128, 0, 0), (170, 255, 195), (128, 128, 0), (0, 0, 128),
)


def class_palette(n_classes: int) -> np.ndarray:
    """(n_classes + 1, 3) uint8 palette; index 0 (unlabeled) is black."""
    palette = np.zeros((n_classes + 1, 3), dtype=np.uint8)
    for c in range(1, n_classes + 1):
        if c <= len(_BASE_COLORS):
            palette[c] = _BASE_COLORS[c - 1]
        else:
            hue = ((c - 1) * 0.61803398875) % 1.0
            rgb = colorsys.hsv_to_rgb(hue, 0.75, 0.95)
            palette[c] = tuple(int(round(255 * v)) for v in rgb)
    return palette


def render_class_map(class_map, palette) -> np.ndarray:
    class_map = np.asarray(class_map)
    if class_map.min() < 0 or class_map.max() >= len(palette):
        raise ValueError("class map holds ids outside the palette")
    return palette[class_map]


def labels_to_map(pixels, shape) -> np.ndarray:
    """Sparse (row, col, class_id) labels as a dense map; unlabeled pixels are 0."""
    out = np.zeros(shape, dtype=np.int32)
    pixels = np.asarray(pixels)
    if len(pixels):
        out[pixels[:, 0], pixels[:, 1]] = pixels[:, 2]
    return out


def side_by_side(left_rgb, right_rgb, gap: int = 2) -> np.ndarray:
    left_rgb = np.asarray(left_rgb)
    right_rgb = np.asarray(right_rgb)
    if left_rgb.shape[0] != right_rgb.shape[0]:
        raise ValueError("panels differ in height")
    divider = np.full((left_rgb.shape[0], gap, 3), 255, dtype=np.uint8)
    return np.concatenate([left_rgb, divider, right_rgb], axis=1)


def write_ppm(path, rgb) -> None:
    """Binary P6 pixmap; dimensions are taken from the array."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected an (m, n, 3) image, got shape {rgb.shape}")
    m, n = rgb.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{n} {m}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    if fields[0] != b"P6" or fields[3] != b"255":
        raise ValueError(f"{path} is not an 8-bit P6 pixmap")
    n, m = int(fields[1]), int(fields[2])
    pos += 1
    pixels = np.frombuffer(raw[pos:pos + m * n * 3], dtype=np.uint8)
    if pixels.size != m * n * 3:
        raise ValueError(f"{path} is truncated")
    return pixels.reshape(m, n, 3)
