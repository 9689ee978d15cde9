"""Dense float32 numerics the spiking layers are assembled from.

Tensors are ``torch.Tensor`` objects in NCHW layout. Every function here is
pure: the output depends only on the arguments (plus an explicit RNG where
one is taken), so the same call can run concurrently on disjoint data.
Autograd passes through transparently; the trainer relies on that.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ShapeError

DTYPE = torch.float32


def check4(x: torch.Tensor, name: str = "input") -> None:
    if x.dim() != 4:
        raise ShapeError(f"{name} must be 4-D (N, C, H, W), got shape {tuple(x.shape)}")
    if any(d <= 0 for d in x.shape):
        raise ShapeError(f"{name} has a zero-sized dim: {tuple(x.shape)}")


@dataclass
class ConvWeights:
    """Bias-free convolution parameters; ``kernel`` is (C_out, C_in, k, k)."""

    kernel: torch.Tensor
    stride: int = 1
    padding: int | None = None

    def __post_init__(self):
        if self.kernel.dim() != 4 or self.kernel.shape[2] != self.kernel.shape[3]:
            raise ShapeError(f"kernel must be (C_out, C_in, k, k), got {tuple(self.kernel.shape)}")
        if self.kernel.shape[2] not in (1, 3):
            raise ShapeError(f"kernel size must be 1 or 3, got {self.kernel.shape[2]}")
        if self.padding is None:
            # same-size output at stride 1
            self.padding = self.kernel.shape[2] // 2
        if self.stride < 1 or self.padding < 0:
            raise ShapeError(f"bad stride/padding: {self.stride}/{self.padding}")

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[1]

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]


def conv2d(x: torch.Tensor, w: ConvWeights) -> torch.Tensor:
    check4(x)
    if x.shape[1] != w.in_channels:
        raise ShapeError(f"input has {x.shape[1]} channels, kernel expects {w.in_channels}")
    return F.conv2d(x, w.kernel, stride=w.stride, padding=w.padding)


def avgpool2d(x: torch.Tensor, k: int, stride: int, padding: int = 0) -> torch.Tensor:
    """Mean over k x k windows, dividing by k*k even where the window hits padding."""
    check4(x)
    h, w = x.shape[2] + 2 * padding, x.shape[3] + 2 * padding
    if h < k or w < k:
        raise ShapeError(f"spatial dims {tuple(x.shape[2:])} (padding {padding}) smaller than window {k}")
    return F.avg_pool2d(x, k, stride=stride, padding=padding, count_include_pad=True)


def batchnorm_batchstats(
    x: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor, eps: float = 1e-5,
    running_mean: torch.Tensor | None = None, running_var: torch.Tensor | None = None,
    momentum: float = 0.1,
) -> torch.Tensor:
    """Normalize each channel with the biased mean/variance of this batch.

    When running buffers are given they are updated in place with the
    unbiased batch variance; the output does not depend on them.
    """
    check4(x)
    if x.shape[0] < 2:
        raise ShapeError("batch statistics need at least 2 samples")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"gamma/beta must have shape ({c},)")
    return F.batch_norm(x, running_mean, running_var, gamma, beta, True, momentum, eps)


def batchnorm_fixed(
    x: torch.Tensor, mean: torch.Tensor, var: torch.Tensor,
    gamma: torch.Tensor, beta: torch.Tensor, eps: float = 1e-5,
) -> torch.Tensor:
    """Normalize with supplied (running) statistics; used at evaluation."""
    check4(x)
    c = x.shape[1]
    scale = gamma * torch.rsqrt(var + eps)
    return x * scale.view(1, c, 1, 1) + (beta - mean * scale).view(1, c, 1, 1)


def linear(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None = None) -> torch.Tensor:
    if x.dim() != 2 or weight.dim() != 2:
        raise ShapeError("linear expects a (N, D) input and a (D_out, D) weight")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"input width {x.shape[1]} != weight width {weight.shape[1]}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"bias must have shape ({weight.shape[0]},)")
    return F.linear(x, weight, bias)


def dropout(x: torch.Tensor, p: float, training: bool, generator: torch.Generator | None = None) -> torch.Tensor:
    """Inverted dropout; identity unless ``training``."""
    if not training or p == 0.0:
        return x
    keep = 1.0 - p
    mask = torch.rand(x.shape, generator=generator, dtype=x.dtype) < keep
    return x * mask.to(x.dtype) / keep


def fan_in(shape: tuple[int, ...]) -> int:
    if len(shape) < 2:
        raise ShapeError(f"cannot infer fan-in from shape {shape}")
    return int(np.prod(shape[1:]))


def he_init(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """Zero-mean Gaussian with std sqrt(2 / fan_in), as float32."""
    std = math.sqrt(2.0 / fan_in(shape))
    return (rng.standard_normal(shape) * std).astype(np.float32)
