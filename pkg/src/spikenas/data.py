"""CIFAR-10 binary ingestion, a seeded synthetic image generator, augmentation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .errors import DataFormatError

CIFAR_SIDE = 32
CIFAR_RECORD = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE
CIFAR_RECORDS_PER_FILE = 10_000
CIFAR_TRAIN_FILES = tuple(f"data_batch_{k}.bin" for k in range(1, 6))
CIFAR_TEST_FILE = "test_batch.bin"


@dataclass
class LabeledBatch:
    images: torch.Tensor  # (N, C, H, W) float32
    labels: torch.Tensor  # (N,) int64

    def __post_init__(self):
        if self.images.dim() != 4 or self.labels.shape != (self.images.shape[0],):
            raise ValueError("images must be (N, C, H, W) with one label per image")

    def __len__(self):
        return self.images.shape[0]

    def take(self, idx) -> "LabeledBatch":
        idx = torch.as_tensor(np.asarray(idx), dtype=torch.long)
        return LabeledBatch(self.images[idx], self.labels[idx])

    def head(self, n: int) -> "LabeledBatch":
        return LabeledBatch(self.images[:n], self.labels[:n])


@dataclass
class Dataset:
    train: LabeledBatch
    test: LabeledBatch
    num_classes: int
    mean: tuple[float, ...]
    std: tuple[float, ...]


def channel_stats(images: np.ndarray) -> tuple[tuple[float, ...], tuple[float, ...]]:
    mean = images.mean(axis=(0, 2, 3), dtype=np.float64)
    std = images.std(axis=(0, 2, 3), dtype=np.float64)
    return tuple(float(m) for m in mean), tuple(float(s) for s in std)


def normalize(images: np.ndarray, mean, std) -> np.ndarray:
    m = np.asarray(mean, dtype=np.float64).reshape(1, -1, 1, 1)
    s = np.asarray(std, dtype=np.float64).reshape(1, -1, 1, 1)
    return ((images - m) / s).astype(np.float32)


def denormalize(images: np.ndarray, mean, std) -> np.ndarray:
    m = np.asarray(mean, dtype=np.float64).reshape(1, -1, 1, 1)
    s = np.asarray(std, dtype=np.float64).reshape(1, -1, 1, 1)
    return (np.asarray(images, dtype=np.float64) * s + m).astype(np.float32)


def _to_batch(images: np.ndarray, labels: np.ndarray) -> LabeledBatch:
    return LabeledBatch(torch.from_numpy(np.ascontiguousarray(images, dtype=np.float32)),
                        torch.from_numpy(labels.astype(np.int64)))


# --- CIFAR-10 ------------------------------------------------------------------

def read_cifar_file(path: str | Path, expected_records: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Labels (n,) and raw pixels (n, 3, 32, 32) as uint8."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing CIFAR-10 file: {path}")
    raw = path.read_bytes()
    if expected_records is not None and len(raw) != expected_records * CIFAR_RECORD:
        raise DataFormatError(
            f"{path}: {len(raw)} bytes, expected {expected_records * CIFAR_RECORD} "
            f"({expected_records} records of {CIFAR_RECORD} bytes)")
    if len(raw) == 0 or len(raw) % CIFAR_RECORD:
        raise DataFormatError(f"{path}: {len(raw)} bytes is not a whole number of {CIFAR_RECORD}-byte records")
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].copy()
    if labels.max() > 9:
        raise DataFormatError(f"{path}: label byte {int(labels.max())} out of range")
    return labels, records[:, 1:].reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE).copy()


def write_cifar_file(path: str | Path, labels: np.ndarray, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels, dtype=np.uint8).reshape(len(labels), -1)
    records = np.concatenate([np.asarray(labels, dtype=np.uint8)[:, None], pixels], axis=1)
    Path(path).write_bytes(records.tobytes())


def load_cifar10_binary(directory: str | Path, mean=None, std=None,
                        records_per_file: int = CIFAR_RECORDS_PER_FILE) -> Dataset:
    """Load the 5 train + 1 test batch files.

    Pixels map to [0, 1], then each channel is standardized with ``mean`` /
    ``std``; when omitted they are computed from the training split.
    """
    directory = Path(directory)
    parts = [read_cifar_file(directory / name, records_per_file) for name in CIFAR_TRAIN_FILES]
    train_labels = np.concatenate([p[0] for p in parts])
    train_px = np.concatenate([p[1] for p in parts]).astype(np.float32) / 255.0
    test_labels, test_px = read_cifar_file(directory / CIFAR_TEST_FILE, records_per_file)
    test_px = test_px.astype(np.float32) / 255.0
    if mean is None or std is None:
        mean, std = channel_stats(train_px)
    return Dataset(_to_batch(normalize(train_px, mean, std), train_labels),
                   _to_batch(normalize(test_px, mean, std), test_labels),
                   10, tuple(mean), tuple(std))


# --- synthetic -----------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 4
    samples_per_class: int = 128
    test_per_class: int = 64
    image_size: int = 16
    channels: int = 3
    family: str = "stripes"
    contrast: float = 0.3
    noise_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.family not in ("stripes", "blobs"):
            raise ValueError(f"unknown pattern family {self.family!r}")
        if self.num_classes < 2 or self.samples_per_class < 1 or self.image_size < 4:
            raise ValueError("need >= 2 classes, >= 1 sample per class, image_size >= 4")


def class_templates(spec: SyntheticSpec) -> np.ndarray:
    """Noise-free class patterns, shape (num_classes, channels, size, size)."""
    size = spec.image_size
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    color_rng = np.random.default_rng([spec.seed, 1])
    colors = color_rng.uniform(0.5, 1.5, size=(spec.num_classes, spec.channels))
    out = np.empty((spec.num_classes, spec.channels, size, size))
    for c in range(spec.num_classes):
        if spec.family == "stripes":
            theta = math.pi * c / spec.num_classes
            proj = xx * math.cos(theta) + yy * math.sin(theta)
            pattern = np.sin(2 * math.pi * 3 * proj / size)
        else:
            ang = 2 * math.pi * c / spec.num_classes
            cy = size / 2 + size / 4 * math.sin(ang)
            cx = size / 2 + size / 4 * math.cos(ang)
            sigma = size / 6
            pattern = 2 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2)) - 0.5
        out[c] = colors[c][:, None, None] * pattern
    return spec.contrast * out


def _synthetic_split(spec: SyntheticSpec, templates: np.ndarray, per_class: int, stream: int):
    rng = np.random.default_rng([spec.seed, stream])
    labels = np.repeat(np.arange(spec.num_classes), per_class)
    rng.shuffle(labels)
    noise = rng.standard_normal((len(labels),) + templates.shape[1:])
    return templates[labels] + spec.noise_std * noise, labels


def make_synthetic(spec: SyntheticSpec) -> Dataset:
    templates = class_templates(spec)
    train_x, train_y = _synthetic_split(spec, templates, spec.samples_per_class, 2)
    test_x, test_y = _synthetic_split(spec, templates, spec.test_per_class, 3)
    mean, std = channel_stats(train_x)
    return Dataset(_to_batch(normalize(train_x, mean, std), train_y),
                   _to_batch(normalize(test_x, mean, std), test_y),
                   spec.num_classes, mean, std)


def nearest_centroid_accuracy(data: Dataset) -> float:
    x = data.train.images.reshape(len(data.train), -1).double()
    centroids = torch.stack([x[data.train.labels == c].mean(0) for c in range(data.num_classes)])
    xt = data.test.images.reshape(len(data.test), -1).double()
    pred = torch.cdist(xt, centroids).argmin(1)
    return float((pred == data.test.labels).double().mean())


# --- augmentation ----------------------------------------------------------------

def augment(batch: LabeledBatch, crop_pad: int, flip: bool, rng: np.random.Generator) -> LabeledBatch:
    """Random zero-pad-then-crop back to size, and random horizontal mirroring."""
    if crop_pad < 0:
        raise ValueError("crop_pad must be >= 0")
    images = batch.images
    n, _, h, w = images.shape
    if crop_pad:
        padded = F.pad(images, (crop_pad,) * 4)
        offsets = rng.integers(0, 2 * crop_pad + 1, size=(n, 2))
        images = torch.stack([padded[k, :, dy:dy + h, dx:dx + w] for k, (dy, dx) in enumerate(offsets)])
    if flip:
        mirror = torch.from_numpy(rng.random(n) < 0.5)
        images = torch.where(mirror.view(n, 1, 1, 1), images.flip(3), images)
    return LabeledBatch(images, batch.labels)
