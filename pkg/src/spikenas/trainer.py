"""Surrogate-gradient BPTT training and evaluation of a built network.

The forward pass stays exactly binary; only the backward pass replaces the
step function's derivative with a rectangular window of width ``gamma``
around the threshold. Reset masks are detached. No truncation: gradients
flow through all T timesteps.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .data import Dataset, LabeledBatch, augment
from .errors import TrainingDiverged
from .genotype import deserialize_genotype, serialize_genotype
from .lif import heaviside
from .network import NetworkConfig, RunMode, SpikingNetwork, build_network


@dataclass(frozen=True)
class SurrogateConfig:
    gamma: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"surrogate gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 20
    batch_size: int = 64
    crop_pad: int = 4
    flip: bool = True
    augment: bool = True

    def __post_init__(self):
        if self.lr < 0 or self.epochs < 1 or self.batch_size < 2:
            raise ValueError("need lr >= 0, epochs >= 1, batch_size >= 2")


def surrogate_grad(u, threshold: float, gamma: float):
    """Rectangular pseudo-derivative of the spike w.r.t. membrane potential."""
    if isinstance(u, torch.Tensor):
        return ((u - threshold).abs() < gamma / 2).to(u.dtype) / gamma
    return (np.abs(np.asarray(u, dtype=float) - threshold) < gamma / 2) / gamma


class RectSpike(torch.autograd.Function):
    @staticmethod
    def forward(ctx, u, threshold, gamma):
        ctx.save_for_backward(u)
        ctx.threshold = threshold
        ctx.gamma = gamma
        return (u >= threshold).to(u.dtype)

    @staticmethod
    def backward(ctx, grad_out):
        (u,) = ctx.saved_tensors
        return grad_out * surrogate_grad(u, ctx.threshold, ctx.gamma), None, None


def make_spike_fn(scfg: SurrogateConfig):
    def spike(u, threshold):
        return RectSpike.apply(u, threshold, scfg.gamma)
    return spike


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    test_acc: float


METRIC_FIELDS = ("epoch", "lr", "train_loss", "train_acc", "test_acc")


def metrics_to_tsv(rows: list[EpochMetrics]) -> str:
    lines = ["\t".join(METRIC_FIELDS)]
    for m in rows:
        lines.append(f"{m.epoch}\t{m.lr!r}\t{m.train_loss!r}\t{m.train_acc!r}\t{m.test_acc!r}")
    return "\n".join(lines) + "\n"


def batch_loss(net: SpikingNetwork, images: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    return F.cross_entropy(net(images), labels)


def _batches(n: int, batch_size: int, order: np.ndarray):
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        if len(idx) >= 2:  # batch statistics need two samples
            yield idx


def make_optimizer(net: SpikingNetwork, tcfg: TrainConfig):
    """SGD with momentum and L2 weight decay, cosine-annealed once per epoch."""
    opt = torch.optim.SGD(net.parameters(), lr=tcfg.lr, momentum=tcfg.momentum,
                          weight_decay=tcfg.weight_decay)
    return opt, torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=tcfg.epochs)


def train(net: SpikingNetwork, dataset: Dataset, tcfg: TrainConfig,
          scfg: SurrogateConfig = SurrogateConfig(), seed: int = 0,
          evaluate_each_epoch: bool = True) -> tuple[SpikingNetwork, list[EpochMetrics]]:
    rng = np.random.default_rng([seed, 7])
    net.dropout_generator = torch.Generator().manual_seed(int(rng.integers(2**62)))
    net.set_spike_fn(make_spike_fn(scfg))
    opt, sched = make_optimizer(net, tcfg)
    train_split = dataset.train
    history = []
    try:
        for epoch in range(tcfg.epochs):
            lr = opt.param_groups[0]["lr"]
            net.set_mode(RunMode.TRAIN)
            order = rng.permutation(len(train_split))
            total_loss, correct, seen = 0.0, 0, 0
            for idx in _batches(len(train_split), tcfg.batch_size, order):
                batch = train_split.take(idx)
                if tcfg.augment:
                    batch = augment(batch, tcfg.crop_pad, tcfg.flip, rng)
                logits = net(batch.images)
                loss = F.cross_entropy(logits, batch.labels)
                if not torch.isfinite(loss):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch + 1} (lr={lr}); lower the learning rate")
                opt.zero_grad(set_to_none=True)
                loss.backward()
                opt.step()
                total_loss += loss.item() * len(idx)
                correct += int((logits.argmax(1) == batch.labels).sum())
                seen += len(idx)
            sched.step()
            test_acc = evaluate(net, dataset.test) if evaluate_each_epoch else math.nan
            history.append(EpochMetrics(epoch + 1, lr, total_loss / seen, correct / seen, test_acc))
    finally:
        net.set_spike_fn(heaviside)
        net.set_mode(RunMode.EVAL)
    return net, history


@torch.no_grad()
def predict(net: SpikingNetwork, split: LabeledBatch, batch_size: int = 256,
            timesteps: int | None = None) -> torch.Tensor:
    net.set_mode(RunMode.EVAL)
    out = []
    for start in range(0, len(split), batch_size):
        out.append(net(split.images[start:start + batch_size], timesteps))
    return torch.cat(out)


def evaluate(net: SpikingNetwork, split: LabeledBatch, batch_size: int = 256,
             timesteps: int | None = None) -> float:
    """Top-1 accuracy of time-averaged voted scores; dropout off, running BN stats."""
    mode = net.mode
    try:
        logits = predict(net, split, batch_size, timesteps)
    finally:
        net.set_mode(mode)
    return float((logits.argmax(1) == split.labels).float().mean())


# --- checkpoints ---------------------------------------------------------------
#
# magic b"SNCK" | u32 version | u32 header_len | header (utf-8 JSON) | raw data
# The header lists every state entry (name, shape) in declaration order; raw
# data is those arrays as little-endian float32, concatenated in that order.

CKPT_MAGIC = b"SNCK"
CKPT_VERSION = 1


def _config_dict(cfg: NetworkConfig) -> dict:
    d = asdict(cfg)
    d["input_dims"] = list(cfg.input_dims)
    return d


def save_checkpoint(net: SpikingNetwork, path: str | Path, extra: dict | None = None) -> None:
    state = net.state_dict()
    header = {
        "genotype": serialize_genotype(net.genotype),
        "network": _config_dict(net.cfg),
        "entries": [{"name": k, "shape": list(v.shape)} for k, v in state.items()],
        "extra": extra or {},
    }
    raw_header = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = bytearray(CKPT_MAGIC + struct.pack("<II", CKPT_VERSION, len(raw_header)) + raw_header)
    for v in state.values():
        blob += v.detach().to(torch.float32).contiguous().numpy().astype("<f4").tobytes()
    Path(path).write_bytes(bytes(blob))


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:4] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint")
    version, size = struct.unpack_from("<II", data, 4)
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[12:12 + size].decode("utf-8"))
    pos = 12 + size
    arrays = {}
    for entry in header["entries"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arrays[entry["name"]] = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(entry["shape"])
        pos += 4 * count
    if pos != len(data):
        raise ValueError(f"{path}: trailing or missing bytes")
    return header, arrays


def load_checkpoint(path: str | Path) -> SpikingNetwork:
    header, arrays = read_checkpoint(path)
    from .lif import LifConfig

    ncfg = dict(header["network"])
    ncfg["lif"] = LifConfig(**ncfg["lif"])
    cfg = NetworkConfig(**ncfg)
    net = build_network(deserialize_genotype(header["genotype"]), cfg, 0)
    net.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in arrays.items()})
    net.set_mode(RunMode.EVAL)
    return net
