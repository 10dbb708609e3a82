"""Two-branch convolutional feature extractor with optional weight sharing.

Each branch runs three conv -> batch norm -> ReLU -> 2x2 max pool blocks
on its own modality; when coupled, blocks 2 and 3 (including their batch
norm parameters and running statistics) are the same objects for both
branches, so gradients from either branch update one parameter store.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import RunningStats, Tensor

BRANCHES = ("hs", "lidar")


@dataclass(frozen=True)
class NetworkConfig:
    in_channels: int = 20      # hyperspectral channels after reduction
    patch_size: int = 11
    widths: tuple[int, int, int] = (32, 64, 128)
    n_classes: int = 2
    coupled: bool = True
    kernel_size: int = 3

    def __post_init__(self):
        if self.kernel_size != 3:
            raise ValueError("only 3x3 kernels are supported")
        if self.in_channels < 1:
            raise ValueError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.patch_size % 2 == 0:
            raise ValueError(f"patch size must be odd, got {self.patch_size}")
        if len(self.widths) != 3 or any(w < 1 for w in self.widths):
            raise ValueError(f"widths must be three positive extents, got {self.widths}")
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")
        if pooled_extent(self.patch_size) < 1:
            raise ValueError(
                f"patch size {self.patch_size} collapses to nothing under three 2x2 pools")


def pooled_extent(patch_size: int) -> int:
    """Spatial extent left after three 2x2/stride-2 pools."""
    s = patch_size
    for _ in range(3):
        s //= 2
    return s


def feature_length(config: NetworkConfig) -> int:
    s = pooled_extent(config.patch_size)
    return config.widths[-1] * s * s


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Conv2d:
    """3x3 same-padding convolution layer with bias."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        self.weight = Tensor(
            kaiming_uniform(rng, (out_channels, in_channels, 3, 3), in_channels * 9),
            requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels, dtype=np.float32), requires_grad=True)

    def __call__(self, x):
        return ag.conv2d_same(x, self.weight, self.bias)


class BatchNorm2d:
    def __init__(self, channels: int):
        self.gamma = Tensor(np.ones(channels, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=np.float32), requires_grad=True)
        self.stats = RunningStats(channels)

    def __call__(self, x, training: bool):
        return ag.batch_norm2d(x, self.gamma, self.beta, self.stats, training)


class ConvBlock:
    """conv -> batch norm -> ReLU -> 2x2 max pool."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        self.conv = Conv2d(in_channels, out_channels, rng)
        self.bn = BatchNorm2d(out_channels)

    def __call__(self, x, training: bool):
        return ag.max_pool2(ag.relu(self.bn(self.conv(x), training)))

    def named_parameters(self, prefix: str):
        return [
            (f"{prefix}.conv.weight", self.conv.weight),
            (f"{prefix}.conv.bias", self.conv.bias),
            (f"{prefix}.bn.gamma", self.bn.gamma),
            (f"{prefix}.bn.beta", self.bn.beta),
        ]

    def named_buffers(self, prefix: str):
        return [
            (f"{prefix}.bn.running_mean", self.bn.stats.mean),
            (f"{prefix}.bn.running_var", self.bn.stats.var),
        ]


class CoupledExtractor:
    """Three conv blocks per branch, the last two optionally shared."""

    def __init__(self, config: NetworkConfig, rng: np.random.Generator):
        w0, w1, w2 = config.widths
        self.config = config
        self.block1 = {
            "hs": ConvBlock(config.in_channels, w0, rng),
            "lidar": ConvBlock(1, w0, rng),
        }
        if config.coupled:
            b2 = ConvBlock(w0, w1, rng)
            b3 = ConvBlock(w1, w2, rng)
            self.block2 = {"hs": b2, "lidar": b2}
            self.block3 = {"hs": b3, "lidar": b3}
        else:
            self.block2 = {"hs": ConvBlock(w0, w1, rng), "lidar": ConvBlock(w0, w1, rng)}
            self.block3 = {"hs": ConvBlock(w1, w2, rng), "lidar": ConvBlock(w1, w2, rng)}

    def forward(self, x, branch: str, training: bool) -> Tensor:
        """Run one branch on an (N, C, p, p) batch; returns (N, feature_length)."""
        if branch not in BRANCHES:
            raise ValueError(f"branch must be one of {BRANCHES}, got {branch!r}")
        h = self.block1[branch](x, training)
        h = self.block2[branch](h, training)
        h = self.block3[branch](h, training)
        return ag.reshape(h, (h.shape[0], -1))

    def _named_blocks(self):
        blocks = [("hs.block1", self.block1["hs"]), ("lidar.block1", self.block1["lidar"])]
        if self.config.coupled:
            blocks += [("shared.block2", self.block2["hs"]), ("shared.block3", self.block3["hs"])]
        else:
            blocks += [
                ("hs.block2", self.block2["hs"]), ("lidar.block2", self.block2["lidar"]),
                ("hs.block3", self.block3["hs"]), ("lidar.block3", self.block3["lidar"]),
            ]
        return blocks

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        """Unique parameters in a fixed order (shared blocks listed once)."""
        out = []
        for prefix, block in self._named_blocks():
            out.extend(block.named_parameters(prefix))
        return out

    def named_buffers(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for prefix, block in self._named_blocks():
            out.extend(block.named_buffers(prefix))
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]


def init_network(config: NetworkConfig, seed: int) -> CoupledExtractor:
    """Seeded extractor: Kaiming-uniform conv weights, zero biases, unit batch norm."""
    return CoupledExtractor(config, np.random.default_rng(seed))


def forward_pair(extractor: CoupledExtractor, x_h, x_l, training: bool) -> tuple[Tensor, Tensor]:
    """Both branch features from one patch pair batch, in a single graph."""
    return (extractor.forward(x_h, "hs", training),
            extractor.forward(x_l, "lidar", training))


def count_params(config: NetworkConfig, fusion: str = "sum") -> dict[str, int]:
    """Trainable weight-matrix element counts with and without sharing.

    Counts convolution kernels plus the three output-head matrices; biases
    and batch-norm parameters are excluded. The uncoupled variant carries
    a second copy of blocks 2 and 3.
    """
    w0, w1, w2 = config.widths
    ks2 = config.kernel_size ** 2
    shared_part = ks2 * (w0 * w1 + w1 * w2)
    conv_coupled = ks2 * (config.in_channels * w0 + 1 * w0) + shared_part
    d = feature_length(config)
    d_fused = 2 * d if fusion == "concat" else d
    heads = config.n_classes * (d + d + d_fused)
    coupled = conv_coupled + heads
    return {"coupled": coupled, "uncoupled": coupled + shared_part}
