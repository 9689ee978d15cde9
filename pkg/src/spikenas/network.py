"""Macro skeleton: encoder, two searched cells around a reduction block, voting classifier.

Every parameter is drawn from its own RNG stream keyed by its position in
the skeleton, so two genotypes that share an edge operation get identical
weights on that edge. Dropping backward edges therefore leaves forward
weights untouched.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
import torch
from torch import nn

from . import tensor as te
from .errors import GenotypeError, ShapeError, StaleStateError
from .genotype import BACKWARD_PAIRS, FORWARD_PAIRS, NUM_NODES, CellGenotype, Operation, validate_genotype
from .lif import LifConfig, LifState, SpikeFn, heaviside, lif_step, zero_state
from .trace import ActivationTrace


class RunMode(enum.Enum):
    SCORE = "score"  # batch-stat BN, no dropout, running stats untouched
    TRAIN = "train"  # batch-stat BN with running-stat update, dropout on
    EVAL = "eval"    # running-stat BN, no dropout


@dataclass(frozen=True)
class NetworkConfig:
    channels: int = 16
    timesteps: int = 5
    num_classes: int = 10
    input_dims: tuple[int, int, int] = (3, 32, 32)
    voting: int = 10
    hidden: int = 1024
    dropout: float = 0.5
    lif: LifConfig = field(default_factory=LifConfig)
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "input_dims", tuple(self.input_dims))
        if min(self.channels, self.timesteps, self.num_classes, self.voting, self.hidden) < 1:
            raise ValueError("channels, timesteps, num_classes, voting and hidden must be >= 1")
        c, h, w = self.input_dims
        if c < 1 or h % 4 or w % 4 or h < 4 or w < 4:
            raise ValueError(f"input spatial dims must be positive multiples of 4, got {self.input_dims}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def classifier_outputs(self) -> int:
        return self.num_classes * self.voting

    @property
    def feature_dim(self) -> int:
        _, h, w = self.input_dims
        return 2 * self.channels * (h // 4) * (w // 4)


# stream keys: (block, kind, a, b)
_ENCODER, _CELL1, _REDUCTION, _CELL2, _FC1, _FC2 = range(6)
_FWD, _BWD = 0, 1


class ParamStreams:
    def __init__(self, rng: np.random.Generator | int):
        if isinstance(rng, np.random.Generator):
            self.root = int(rng.integers(0, 2**63 - 1))
        else:
            self.root = int(rng)

    def __call__(self, *key: int) -> np.random.Generator:
        return np.random.default_rng([self.root, *key])


def _param(arr: np.ndarray) -> nn.Parameter:
    return nn.Parameter(torch.from_numpy(arr))


class BatchNorm(nn.Module):
    def __init__(self, channels: int, eps: float, momentum: float):
        super().__init__()
        self.gamma = nn.Parameter(torch.ones(channels))
        self.beta = nn.Parameter(torch.zeros(channels))
        self.register_buffer("running_mean", torch.zeros(channels))
        self.register_buffer("running_var", torch.ones(channels))
        self.eps = eps
        self.momentum = momentum
        self.mode = RunMode.SCORE

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.mode is RunMode.EVAL:
            return te.batchnorm_fixed(x, self.running_mean, self.running_var, self.gamma, self.beta, self.eps)
        if self.mode is RunMode.TRAIN:
            return te.batchnorm_batchstats(x, self.gamma, self.beta, self.eps,
                                           self.running_mean, self.running_var, self.momentum)
        return te.batchnorm_batchstats(x, self.gamma, self.beta, self.eps)


class ConvBN(nn.Module):
    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator, cfg: NetworkConfig):
        super().__init__()
        self.weight = _param(te.he_init((c_out, c_in, k, k), rng))
        self.bn = BatchNorm(c_out, cfg.bn_eps, cfg.bn_momentum)

    def forward(self, x):
        return self.bn(te.conv2d(x, te.ConvWeights(self.weight)))


class AvgPool3x3(nn.Module):
    def forward(self, x):
        return te.avgpool2d(x, 3, stride=1, padding=1)


def make_op(op: Operation, channels: int, rng: np.random.Generator, cfg: NetworkConfig) -> nn.Module | None:
    """Module for one edge; ``None`` for zeroize (the edge contributes nothing)."""
    if op is Operation.ZEROIZE:
        return None
    if op is Operation.SKIP_CONNECT:
        return nn.Identity()
    if op is Operation.CONV_1X1:
        return ConvBN(channels, channels, 1, rng, cfg)
    if op is Operation.CONV_3X3:
        return ConvBN(channels, channels, 3, rng, cfg)
    if op is Operation.AVG_POOL_3X3:
        return AvgPool3x3()
    raise AssertionError(op)


class LIFNeuron(nn.Module):
    """A layer of LIF units; holds the membrane between timesteps."""

    def __init__(self, cfg: LifConfig):
        super().__init__()
        self.cfg = cfg
        self.spike_fn: SpikeFn = heaviside
        self.state: LifState | None = None

    def reset(self):
        self.state = None

    def forward(self, current):
        if self.state is None:
            self.state = zero_state(current, self.cfg)
        spikes, self.state = lif_step(self.state, current, self.cfg, self.spike_fn)
        return spikes


def _edge_key(pair: tuple[int, int]) -> str:
    return f"{pair[0]}_{pair[1]}"


class Cell(nn.Module):
    """Four-node searched cell.

    Node 0 is the cell input (plus any backward feedback into it). Nodes
    1..3 are LIF layers fed by the sum of their incoming forward edges at t
    and backward edges applied to the higher nodes' spikes from t-1. Node
    3's spikes are the cell output.
    """

    def __init__(self, genotype: CellGenotype, channels: int, streams: ParamStreams, block: int,
                 cfg: NetworkConfig):
        super().__init__()
        self.genotype = genotype
        self.forward_ops = nn.ModuleDict()
        self.backward_ops = nn.ModuleDict()
        for pair in FORWARD_PAIRS:
            op = make_op(genotype.forward[pair], channels, streams(block, _FWD, *pair), cfg)
            if op is not None:
                self.forward_ops[_edge_key(pair)] = op
        for pair in BACKWARD_PAIRS:
            op = make_op(genotype.backward[pair], channels, streams(block, _BWD, *pair), cfg)
            if op is not None:
                self.backward_ops[_edge_key(pair)] = op
        self.nodes = nn.ModuleList(LIFNeuron(cfg.lif) for _ in range(NUM_NODES - 1))
        self.previous: list[torch.Tensor] | None = None

    def reset(self):
        self.previous = None
        for lif in self.nodes:
            lif.reset()

    def _incoming(self, j: int, feats: list[torch.Tensor], t: int) -> list[torch.Tensor]:
        terms = []
        for i in range(j):
            op = self.forward_ops[_edge_key((i, j))] if _edge_key((i, j)) in self.forward_ops else None
            if op is not None:
                terms.append(op(feats[i]))
        if t > 0 and self.previous is not None:
            for k in range(j + 1, NUM_NODES):
                key = _edge_key((k, j))
                if key in self.backward_ops:
                    terms.append(self.backward_ops[key](self.previous[k]))
        return terms

    def step(self, x: torch.Tensor, t: int) -> list[torch.Tensor]:
        """Advance one timestep; returns spikes of nodes 1..3."""
        feats = [x]
        node0 = self._incoming(0, feats, t)
        if node0:
            feats[0] = x + sum(node0[1:], node0[0])
        spikes = []
        for j in range(1, NUM_NODES):
            terms = self._incoming(j, feats, t)
            current = sum(terms[1:], terms[0]) if terms else torch.zeros_like(x)
            s = self.nodes[j - 1](current)
            feats.append(s)
            spikes.append(s)
        self.previous = feats
        return spikes


class SpikingNetwork(nn.Module):
    def __init__(self, genotype: CellGenotype, cfg: NetworkConfig, rng: np.random.Generator | int):
        super().__init__()
        violations = validate_genotype(genotype)
        if violations:
            raise GenotypeError(f"genotype has bidirectional node pairs {violations}")
        streams = ParamStreams(rng)
        c = cfg.channels
        self.cfg = cfg
        self.genotype = genotype
        self.encoder = ConvBN(cfg.input_dims[0], c, 3, streams(_ENCODER, 0, 0, 0), cfg)
        self.encoder_lif = LIFNeuron(cfg.lif)
        self.cell1 = Cell(genotype, c, streams, _CELL1, cfg)
        self.reduction = ConvBN(c, 2 * c, 3, streams(_REDUCTION, 0, 0, 0), cfg)
        self.reduction_lif = LIFNeuron(cfg.lif)
        self.cell2 = Cell(genotype, 2 * c, streams, _CELL2, cfg)
        self.fc1_weight = _param(te.he_init((cfg.hidden, cfg.feature_dim), streams(_FC1, 0, 0, 0)))
        self.fc1_bias = nn.Parameter(torch.zeros(cfg.hidden))
        self.fc2_weight = _param(te.he_init((cfg.classifier_outputs, cfg.hidden), streams(_FC2, 0, 0, 0)))
        self.fc2_bias = nn.Parameter(torch.zeros(cfg.classifier_outputs))
        self.mode = RunMode.SCORE
        self.dropout_generator: torch.Generator | None = None
        self._stale = False

    # -- state ---------------------------------------------------------------

    def lif_layers(self) -> list[tuple[str, LIFNeuron]]:
        """All LIF layers in simulation order; the order is the trace order."""
        layers = [("encoder", self.encoder_lif)]
        layers += [(f"cell1.node{j + 1}", lif) for j, lif in enumerate(self.cell1.nodes)]
        layers.append(("reduction", self.reduction_lif))
        layers += [(f"cell2.node{j + 1}", lif) for j, lif in enumerate(self.cell2.nodes)]
        return layers

    def reset(self) -> None:
        for _, lif in self.lif_layers():
            lif.reset()
        self.cell1.reset()
        self.cell2.reset()
        self._stale = False

    def set_mode(self, mode: RunMode | str) -> "SpikingNetwork":
        mode = RunMode(mode)
        self.mode = mode
        for m in self.modules():
            if isinstance(m, BatchNorm):
                m.mode = mode
        self.train(mode is RunMode.TRAIN)
        return self

    def set_spike_fn(self, fn: SpikeFn) -> None:
        for _, lif in self.lif_layers():
            lif.spike_fn = fn

    # -- simulation ----------------------------------------------------------

    def steps(self, batch: torch.Tensor, timesteps: int | None = None) -> Iterator[tuple[int, dict, torch.Tensor]]:
        """Simulate step by step, yielding ``(t, {layer: spikes}, class_scores)``."""
        if self._stale:
            raise StaleStateError("network state not reset since the last simulation")
        te.check4(batch, "batch")
        if tuple(batch.shape[1:]) != self.cfg.input_dims:
            raise ShapeError(f"batch dims {tuple(batch.shape[1:])} != configured {self.cfg.input_dims}")
        self._stale = True
        T = self.cfg.timesteps if timesteps is None else timesteps
        n = batch.shape[0]
        # the image is identical at every step, so its encoder current is too
        current = self.encoder(batch)
        mask = None
        for t in range(T):
            spikes = {"encoder": self.encoder_lif(current)}
            out1 = self.cell1.step(spikes["encoder"], t)
            spikes.update((f"cell1.node{j + 1}", s) for j, s in enumerate(out1))
            spikes["reduction"] = self.reduction_lif(self.reduction(out1[-1]))
            pooled = te.avgpool2d(spikes["reduction"], 2, stride=2)
            out2 = self.cell2.step(pooled, t)
            spikes.update((f"cell2.node{j + 1}", s) for j, s in enumerate(out2))
            feat = te.avgpool2d(out2[-1], 2, stride=2).reshape(n, -1)
            if self.mode is RunMode.TRAIN and self.cfg.dropout > 0:
                if mask is None:  # one mask for the whole presentation
                    mask = te.dropout(torch.ones_like(feat), self.cfg.dropout, True, self.dropout_generator)
                feat = feat * mask
            hidden = te.linear(feat, self.fc1_weight, self.fc1_bias)
            out = te.linear(hidden, self.fc2_weight, self.fc2_bias)
            scores = out.reshape(n, self.cfg.num_classes, self.cfg.voting).mean(dim=2)
            yield t, spikes, scores

    def forward_collect(self, batch: torch.Tensor, timesteps: int | None = None,
                        record: bool = True) -> tuple[ActivationTrace, list[torch.Tensor]]:
        trace = ActivationTrace()
        logits = []
        for t, spikes, scores in self.steps(batch, timesteps):
            if record:
                for name, _ in self.lif_layers():
                    s = spikes[name]
                    trace.append(name, t, s.detach().reshape(s.shape[0], -1).to(torch.bool).numpy())
            logits.append(scores)
        return trace, logits

    def forward(self, batch: torch.Tensor, timesteps: int | None = None) -> torch.Tensor:
        """Reset, simulate, and return time-averaged class scores."""
        self.reset()
        _, logits = self.forward_collect(batch, timesteps, record=False)
        return torch.stack(logits).mean(dim=0)


def build_network(genotype: CellGenotype, cfg: NetworkConfig,
                  rng: np.random.Generator | int) -> SpikingNetwork:
    return SpikingNetwork(genotype, cfg, rng)
