"""Training-free architecture scores from binary spike patterns.

The kernel compares every pair of mini-batch samples layer by layer and
timestep by timestep. With the sparsity-aware metric each raw Hamming
distance is rescaled by alpha over its expected value under independent
Bernoulli firing at the two observed sparsities, so densely and sparsely
firing samples contribute on the same scale. Per-(layer, timestep) kernels
are summed and the score is log|det K|.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import torch

from .errors import ShapeError
from .genotype import CellGenotype
from .network import NetworkConfig, RunMode, build_network
from .trace import ActivationTrace

DEGENERATE_EPS = 1e-12
SYMMETRY_TOL = 1e-9
# relative smallest-singular-value cutoff for calling a kernel singular
SINGULAR_RCOND = 1e-12


class Metric(enum.Enum):
    SAHD = "sahd"
    HD = "hd"


class LayerSelection(enum.Enum):
    DOWNSTREAM = "downstream"  # every LIF layer after the genotype-independent encoder
    CELLS = "cells"            # searched cell nodes only
    ALL = "all"

    def layers(self, names: list[str]) -> list[str]:
        if self is LayerSelection.ALL:
            return list(names)
        if self is LayerSelection.CELLS:
            return [n for n in names if n.startswith("cell")]
        return [n for n in names if n != "encoder"]


@dataclass(frozen=True)
class ArchitectureScore:
    value: float
    singular: bool
    sign: float = 1.0

    def __post_init__(self):
        if self.singular != (self.value == -math.inf):
            raise ValueError("singular scores carry -inf and only they do")

    @classmethod
    def singular_score(cls, sign: float = 0.0) -> "ArchitectureScore":
        return cls(-math.inf, True, sign)

    def sort_key(self) -> float:
        return self.value


# --- pairwise primitives -----------------------------------------------------

def _bits(c) -> np.ndarray:
    c = np.asarray(c)
    if c.ndim != 1:
        raise ShapeError("pattern must be a 1-D bit vector")
    return c.astype(bool)


def sparsity(pattern) -> float:
    """Fraction of zeros."""
    c = _bits(pattern)
    if c.size == 0:
        raise ShapeError("empty pattern")
    return float(np.count_nonzero(~c)) / c.size


def hamming(a, b) -> int:
    a, b = _bits(a), _bits(b)
    if a.shape != b.shape:
        raise ShapeError(f"pattern lengths differ: {a.size} vs {b.size}")
    return int(np.count_nonzero(a != b))


def disagreement_probability(r_i: float, r_j: float) -> float:
    return r_i * (1.0 - r_j) + (1.0 - r_i) * r_j


def expected_hd(r_i: float, r_j: float, n_a: int) -> float:
    """Mean Hamming distance of independent Bernoulli patterns with zero-fractions r_i, r_j."""
    if not (0.0 <= r_i <= 1.0 and 0.0 <= r_j <= 1.0):
        raise ValueError("sparsities must lie in [0, 1]")
    return n_a * disagreement_probability(r_i, r_j)


def sahd(a, b, r_i: float | None = None, r_j: float | None = None, alpha: float | None = None) -> float:
    """Sparsity-aware Hamming distance; alpha defaults to half the pattern length.

    Identical patterns are at distance 0 whatever their sparsity. A
    vanishing expected distance is clamped so the result stays finite.
    """
    d = hamming(a, b)
    n_a = len(a)
    if alpha is None:
        alpha = 0.5 * n_a
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if d == 0:
        return 0.0
    r_i = sparsity(a) if r_i is None else r_i
    r_j = sparsity(b) if r_j is None else r_j
    denom = max(n_a * disagreement_probability(r_i, r_j), DEGENERATE_EPS * n_a)
    return alpha / denom * d


# --- kernel ------------------------------------------------------------------

def _block_distances(bits: np.ndarray, metric: Metric, alpha_ratio: float) -> np.ndarray:
    """N x N distance matrix for one (layer, timestep) block of shape (N, N_A)."""
    c = bits.astype(np.float64)
    n_a = c.shape[1]
    ones = c.sum(axis=1)
    # integer-valued float64 products are exact below 2**53
    overlap = c @ c.T
    d = ones[:, None] + ones[None, :] - 2.0 * overlap
    if metric is Metric.HD:
        return d
    r = 1.0 - ones / n_a
    p = r[:, None] * (1.0 - r[None, :]) + (1.0 - r[:, None]) * r[None, :]
    denom = np.maximum(n_a * p, DEGENERATE_EPS * n_a)
    return np.where(d == 0.0, 0.0, (alpha_ratio * n_a) / denom * d)


def kernel_from_trace(trace: ActivationTrace, metric: Metric | str = Metric.SAHD,
                      alpha_ratio: float = 0.5) -> np.ndarray:
    """Sum over layers and timesteps of (N_A - distance); float64, symmetric."""
    metric = Metric(metric)
    if len(trace) == 0:
        raise ShapeError("empty trace")
    n = trace.num_samples
    if n < 2:
        raise ShapeError("a kernel needs at least 2 samples")
    k = np.zeros((n, n), dtype=np.float64)
    for _, _, bits in trace.blocks():
        if bits.shape[0] != n:
            raise ShapeError("sample count differs between trace blocks")
        k += bits.shape[1] - _block_distances(bits, metric, alpha_ratio)
    return k


def score_logdet(k: np.ndarray) -> ArchitectureScore:
    """log|det K| in float64; numerically singular kernels get -inf."""
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ShapeError("kernel must be square")
    if not np.all(np.isfinite(k)):
        return ArchitectureScore.singular_score()
    scale = max(1.0, float(np.max(np.abs(k)))) if k.size else 1.0
    if np.max(np.abs(k - k.T)) > SYMMETRY_TOL * scale:
        raise ValueError("kernel is not symmetric")
    try:
        sv = np.linalg.svd(k, compute_uv=False)
        sign, logabs = np.linalg.slogdet(k)
    except np.linalg.LinAlgError:
        return ArchitectureScore.singular_score()
    if sign == 0 or not math.isfinite(logabs) or sv[-1] <= SINGULAR_RCOND * sv[0]:
        return ArchitectureScore.singular_score(float(sign))
    return ArchitectureScore(float(logabs), False, float(sign))


# --- pipeline ----------------------------------------------------------------

def collect_trace(genotype: CellGenotype, batch: torch.Tensor, cfg: NetworkConfig, seed,
                  timesteps: int | None = None) -> ActivationTrace:
    net = build_network(genotype, cfg, seed).set_mode(RunMode.SCORE)
    net.reset()
    with torch.no_grad():
        trace, _ = net.forward_collect(batch, timesteps)
    return trace


def score_trace(trace: ActivationTrace, metric: Metric | str = Metric.SAHD,
                layers: LayerSelection | str = LayerSelection.DOWNSTREAM) -> ArchitectureScore:
    selected = trace.select(LayerSelection(layers).layers(trace.layers))
    return score_logdet(kernel_from_trace(selected, metric))


def score_candidate(genotype: CellGenotype, batch: torch.Tensor, cfg: NetworkConfig, seed,
                    layers: LayerSelection | str = LayerSelection.DOWNSTREAM,
                    timesteps: int | None = None) -> ArchitectureScore:
    return score_trace(collect_trace(genotype, batch, cfg, seed, timesteps), Metric.SAHD, layers)


def score_candidate_hd(genotype: CellGenotype, batch: torch.Tensor, cfg: NetworkConfig, seed,
                       layers: LayerSelection | str = LayerSelection.DOWNSTREAM,
                       timesteps: int | None = None) -> ArchitectureScore:
    return score_trace(collect_trace(genotype, batch, cfg, seed, timesteps), Metric.HD, layers)


def score_both(genotype: CellGenotype, batch: torch.Tensor, cfg: NetworkConfig, seed,
               layers: LayerSelection | str = LayerSelection.DOWNSTREAM,
               timesteps: int | None = None) -> tuple[ArchitectureScore, ArchitectureScore]:
    """SAHD and HD scores from a single simulation."""
    trace = collect_trace(genotype, batch, cfg, seed, timesteps)
    return score_trace(trace, Metric.SAHD, layers), score_trace(trace, Metric.HD, layers)
