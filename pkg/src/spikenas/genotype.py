"""Cell genotypes: forward and backward (t-1 -> t) edges over four nodes."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import GenotypeError, GenotypeParseError

NUM_NODES = 4
# Forward edge (i, j) feeds node j from lower node i; backward edge (j, i)
# feeds node i at time t from the higher node j's spikes at t-1.
FORWARD_PAIRS: tuple[tuple[int, int], ...] = tuple(
    (i, j) for j in range(1, NUM_NODES) for i in range(j))
BACKWARD_PAIRS: tuple[tuple[int, int], ...] = tuple((j, i) for i, j in FORWARD_PAIRS)

MAX_RESAMPLES = 1000


class Operation(enum.Enum):
    ZEROIZE = "zeroize"
    SKIP_CONNECT = "skip_connect"
    CONV_1X1 = "conv_1x1"
    CONV_3X3 = "conv_3x3"
    AVG_POOL_3X3 = "avg_pool_3x3"

    @property
    def code(self) -> int:
        return _CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "Operation":
        return OPERATIONS[code]


OPERATIONS: tuple[Operation, ...] = tuple(Operation)
_CODES = {op: k for k, op in enumerate(OPERATIONS)}


class Mode(enum.Enum):
    FORWARD_ONLY = "forward_only"
    FORWARD_AND_BACKWARD = "forward_and_backward"

    @classmethod
    def parse(cls, text: str) -> "Mode":
        aliases = {"forward": cls.FORWARD_ONLY, "fw": cls.FORWARD_ONLY,
                   "backward": cls.FORWARD_AND_BACKWARD, "bw": cls.FORWARD_AND_BACKWARD}
        if text in aliases:
            return aliases[text]
        return cls(text)


@dataclass(frozen=True)
class CellGenotype:
    forward: Mapping[tuple[int, int], Operation]
    backward: Mapping[tuple[int, int], Operation] = field(
        default_factory=lambda: {p: Operation.ZEROIZE for p in BACKWARD_PAIRS})
    mode: Mode = Mode.FORWARD_ONLY

    def __post_init__(self):
        if set(self.forward) != set(FORWARD_PAIRS):
            raise GenotypeError(f"forward edges must be exactly {FORWARD_PAIRS}")
        if set(self.backward) != set(BACKWARD_PAIRS):
            raise GenotypeError(f"backward edges must be exactly {BACKWARD_PAIRS}")
        # canonical order so equality, repr and serialization are stable
        object.__setattr__(self, "forward", {p: Operation(self.forward[p]) for p in FORWARD_PAIRS})
        object.__setattr__(self, "backward", {p: Operation(self.backward[p]) for p in BACKWARD_PAIRS})

    @classmethod
    def from_codes(cls, forward: list[int], backward: list[int] | None = None,
                   mode: Mode | None = None) -> "CellGenotype":
        """Build from op codes listed in FORWARD_PAIRS / BACKWARD_PAIRS order."""
        fwd = dict(zip(FORWARD_PAIRS, map(Operation.from_code, forward)))
        if backward is None:
            backward = [0] * len(BACKWARD_PAIRS)
        bwd = dict(zip(BACKWARD_PAIRS, map(Operation.from_code, backward)))
        if mode is None:
            mode = Mode.FORWARD_AND_BACKWARD if any(backward) else Mode.FORWARD_ONLY
        return cls(fwd, bwd, mode)

    @classmethod
    def zeroize(cls) -> "CellGenotype":
        return cls.from_codes([0] * 6)

    def forward_codes(self) -> list[int]:
        return [self.forward[p].code for p in FORWARD_PAIRS]

    def backward_codes(self) -> list[int]:
        return [self.backward[p].code for p in BACKWARD_PAIRS]

    def forward_projection(self) -> "CellGenotype":
        """The same cell with every backward edge removed."""
        return CellGenotype.from_codes(self.forward_codes(), mode=Mode.FORWARD_ONLY)

    def code_string(self) -> str:
        """Compact single-token form, e.g. ``F301200-B000010``."""
        return ("F" + "".join(map(str, self.forward_codes()))
                + "-B" + "".join(map(str, self.backward_codes())))

    @classmethod
    def from_code_string(cls, text: str) -> "CellGenotype":
        try:
            f, b = text.split("-")
            if f[0] != "F" or b[0] != "B" or len(f) != 7 or len(b) != 7:
                raise ValueError
            fwd = [int(c) for c in f[1:]]
            bwd = [int(c) for c in b[1:]]
            if not all(0 <= c < len(OPERATIONS) for c in fwd + bwd):
                raise ValueError
        except (ValueError, IndexError):
            raise GenotypeParseError(f"bad genotype code {text!r}", "code") from None
        return cls.from_codes(fwd, bwd)


def validate_genotype(g: CellGenotype) -> list[tuple[int, int]]:
    """Node pairs (i, j), i < j, carrying both a forward and a backward edge.

    An empty list means valid. A forward-only genotype with a backward edge
    is reported too, keyed by that edge's node pair.
    """
    violations = []
    for (i, j) in FORWARD_PAIRS:
        fwd = g.forward[(i, j)] is not Operation.ZEROIZE
        bwd = g.backward[(j, i)] is not Operation.ZEROIZE
        if (fwd and bwd) or (bwd and g.mode is Mode.FORWARD_ONLY):
            violations.append((i, j))
    return violations


def is_valid(g: CellGenotype) -> bool:
    return not validate_genotype(g)


def sample_genotype(rng: np.random.Generator, mode: Mode | str = Mode.FORWARD_AND_BACKWARD) -> CellGenotype:
    """Draw every edge's op uniformly, then repair bidirectional pairs.

    The backward edge of an offending pair is redrawn until the pair is
    valid; after MAX_RESAMPLES failed draws it is set to zeroize.
    """
    mode = Mode.parse(mode) if isinstance(mode, str) else mode
    n_ops = len(OPERATIONS)
    fwd = [int(c) for c in rng.integers(0, n_ops, size=len(FORWARD_PAIRS))]
    if mode is Mode.FORWARD_ONLY:
        return CellGenotype.from_codes(fwd, mode=mode)
    bwd = [int(c) for c in rng.integers(0, n_ops, size=len(BACKWARD_PAIRS))]
    for k in range(len(FORWARD_PAIRS)):
        tries = 0
        while fwd[k] != 0 and bwd[k] != 0:
            if tries == MAX_RESAMPLES:
                bwd[k] = 0
                break
            bwd[k] = int(rng.integers(0, n_ops))
            tries += 1
    return CellGenotype.from_codes(fwd, bwd, mode=mode)


def count_attributes(g: CellGenotype) -> dict[str, int]:
    """Connection and per-operation counts over both edge sets."""
    fwd_ops = list(g.forward.values())
    bwd_ops = list(g.backward.values())
    counts = {
        "forward": sum(op is not Operation.ZEROIZE for op in fwd_ops),
        "backward": sum(op is not Operation.ZEROIZE for op in bwd_ops),
    }
    for op in OPERATIONS[1:]:
        counts[op.value] = fwd_ops.count(op) + bwd_ops.count(op)
    for op in OPERATIONS[1:]:
        counts["fw_" + op.value] = fwd_ops.count(op)
        counts["bw_" + op.value] = bwd_ops.count(op)
    counts["total"] = counts["forward"] + counts["backward"]
    return counts


# --- interchange text --------------------------------------------------------

def genotype_to_dict(g: CellGenotype) -> dict:
    return {
        "nodes": NUM_NODES,
        "mode": g.mode.value,
        "forward": [{"from": i, "to": j, "op": g.forward[(i, j)].value} for i, j in FORWARD_PAIRS],
        "backward": [{"from": j, "to": i, "op": g.backward[(j, i)].value} for j, i in BACKWARD_PAIRS],
    }


def serialize_genotype(g: CellGenotype) -> str:
    return json.dumps(genotype_to_dict(g), indent=2) + "\n"


def _parse_edges(items, expected: tuple[tuple[int, int], ...], key: str) -> dict:
    if not isinstance(items, list):
        raise GenotypeParseError(f"'{key}' must be a list", key)
    edges = {}
    for k, item in enumerate(items):
        where = f"{key}[{k}]"
        if not isinstance(item, dict) or set(item) != {"from", "to", "op"}:
            raise GenotypeParseError("edge needs exactly 'from', 'to', 'op'", where)
        if any(isinstance(item[e], bool) or not isinstance(item[e], int) for e in ("from", "to")):
            raise GenotypeParseError("'from' and 'to' must be integers", where)
        pair = (item["from"], item["to"])
        if pair not in expected:
            raise GenotypeParseError(f"edge {pair} not allowed in '{key}'", where)
        if pair in edges:
            raise GenotypeParseError(f"duplicate edge {pair}", where)
        try:
            edges[pair] = Operation(item["op"])
        except ValueError:
            raise GenotypeParseError(f"unknown operation {item['op']!r}", where + ".op") from None
    missing = [p for p in expected if p not in edges]
    if missing:
        raise GenotypeParseError(f"missing edges {missing}", key)
    return edges


def genotype_from_dict(data) -> CellGenotype:
    if not isinstance(data, dict):
        raise GenotypeParseError("top level must be a mapping", "root")
    unknown = set(data) - {"nodes", "mode", "forward", "backward"}
    if unknown:
        raise GenotypeParseError(f"unknown fields {sorted(unknown)}", "root")
    for key in ("nodes", "mode", "forward", "backward"):
        if key not in data:
            raise GenotypeParseError(f"missing field '{key}'", "root")
    if isinstance(data["nodes"], bool) or data["nodes"] != NUM_NODES:
        raise GenotypeParseError(f"nodes must be {NUM_NODES}", "nodes")
    try:
        mode = Mode(data["mode"])
    except ValueError:
        raise GenotypeParseError(f"unknown mode {data['mode']!r}", "mode") from None
    fwd = _parse_edges(data["forward"], FORWARD_PAIRS, "forward")
    bwd = _parse_edges(data["backward"], BACKWARD_PAIRS, "backward")
    return CellGenotype(fwd, bwd, mode)


def deserialize_genotype(text: str) -> CellGenotype:
    if not text.strip():
        raise GenotypeParseError("empty genotype text", "1:1")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GenotypeParseError(exc.msg, f"{exc.lineno}:{exc.colno}") from None
    return genotype_from_dict(data)
