"""Binary activation traces and their on-disk dump format.

Dump layout (all integers little-endian):

    magic      4 bytes  b"SNTR"
    version    u32      1
    n_layers   u32
    per layer: name_len u16, name (utf-8)
    n_blocks   u32
    per block: layer_id u32, t u32, n_a u32, n u32,
               n rows of ceil(n_a / 8) bytes (np.packbits, bitorder="little")

Blocks appear in layer-then-timestep order.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"SNTR"
VERSION = 1


@dataclass
class ActivationTrace:
    """``patterns[l][t]`` is an (N, N_A^l) bool array for layer ``layers[l]``."""

    layers: list[str] = field(default_factory=list)
    patterns: list[list[np.ndarray]] = field(default_factory=list)

    def append(self, layer: str, t: int, bits: np.ndarray) -> None:
        if layer not in self.layers:
            self.layers.append(layer)
            self.patterns.append([])
        steps = self.patterns[self.layers.index(layer)]
        if t != len(steps):
            raise ValueError(f"layer {layer}: expected timestep {len(steps)}, got {t}")
        steps.append(np.asarray(bits, dtype=bool))

    @property
    def num_samples(self) -> int:
        return self.patterns[0][0].shape[0]

    @property
    def timesteps(self) -> int:
        return len(self.patterns[0]) if self.patterns else 0

    @property
    def layer_sizes(self) -> list[int]:
        return [steps[0].shape[1] for steps in self.patterns]

    def __len__(self) -> int:
        return sum(len(steps) for steps in self.patterns)

    def select(self, names) -> "ActivationTrace":
        keep = [k for k, name in enumerate(self.layers) if name in set(names)]
        return ActivationTrace([self.layers[k] for k in keep], [self.patterns[k] for k in keep])

    def blocks(self):
        """Yield ``(layer_index, t, bits)`` in layer-then-timestep order."""
        for l, steps in enumerate(self.patterns):
            for t, bits in enumerate(steps):
                yield l, t, bits

    def permuted(self, order) -> "ActivationTrace":
        order = np.asarray(order)
        return ActivationTrace(list(self.layers),
                               [[bits[order] for bits in steps] for steps in self.patterns])

    def equals(self, other: "ActivationTrace") -> bool:
        return (self.layers == other.layers and all(
            len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))
            for a, b in zip(self.patterns, other.patterns)))


def dump_trace(trace: ActivationTrace, path: str | Path) -> None:
    out = bytearray(MAGIC)
    out += struct.pack("<II", VERSION, len(trace.layers))
    for name in trace.layers:
        raw = name.encode("utf-8")
        out += struct.pack("<H", len(raw)) + raw
    out += struct.pack("<I", len(trace))
    for l, t, bits in trace.blocks():
        n, n_a = bits.shape
        out += struct.pack("<IIII", l, t, n_a, n)
        out += np.packbits(bits, axis=1, bitorder="little").tobytes()
    Path(path).write_bytes(bytes(out))


def load_trace(path: str | Path) -> ActivationTrace:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a trace dump")
    version, n_layers = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported trace version {version}")
    pos = 12
    names = []
    for _ in range(n_layers):
        (size,) = struct.unpack_from("<H", data, pos)
        names.append(data[pos + 2:pos + 2 + size].decode("utf-8"))
        pos += 2 + size
    (n_blocks,) = struct.unpack_from("<I", data, pos)
    pos += 4
    trace = ActivationTrace()
    for _ in range(n_blocks):
        l, t, n_a, n = struct.unpack_from("<IIII", data, pos)
        pos += 16
        row = (n_a + 7) // 8
        packed = np.frombuffer(data, dtype=np.uint8, count=n * row, offset=pos).reshape(n, row)
        pos += n * row
        trace.append(names[l], t, np.unpackbits(packed, axis=1, count=n_a, bitorder="little").astype(bool))
    return trace
