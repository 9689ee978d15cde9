"""Random search over genotypes, rank statistics and attribute tables."""
from __future__ import annotations

import math
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from multiprocessing import get_context
from pathlib import Path

import numpy as np
import torch
from scipy.stats import binomtest

from .genotype import CellGenotype, Mode, count_attributes, sample_genotype, serialize_genotype
from .network import NetworkConfig
from .scoring import ArchitectureScore, LayerSelection, score_both

REPORT_HEADER = "rank\tindex\tseed\tscore\tsingular\thd_score\taccuracy\tgenotype"


def candidate_seed(master_seed: int, k: int) -> int:
    """Seed of candidate ``k``; a pure function of (master_seed, k)."""
    state = np.random.SeedSequence([master_seed, k]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def scoring_batch(images: torch.Tensor, size: int, master_seed: int) -> torch.Tensor:
    """The run's shared scoring batch: ``size`` training images chosen by the master seed."""
    if not 2 <= size <= len(images):
        raise ValueError(f"scoring batch size must lie in [2, {len(images)}], got {size}")
    idx = np.random.default_rng([master_seed, 0x5C0]).choice(len(images), size, replace=False)
    return images[torch.from_numpy(np.sort(idx))]


def candidate_genotype(seed: int, mode: Mode) -> CellGenotype:
    return sample_genotype(np.random.default_rng([seed]), mode)


@dataclass
class CandidateRecord:
    sample_index: int
    seed: int
    genotype: CellGenotype
    score: ArchitectureScore
    hd_score: ArchitectureScore | None = None
    trained_accuracy: float | None = None

    def rank_key(self):
        return (-self.score.value, self.sample_index)


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def _parse_float(text: str) -> float | None:
    return None if text == "" else float(text)


@dataclass
class SearchReport:
    records: list[CandidateRecord]
    duration: float = 0.0
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.records = sorted(self.records, key=CandidateRecord.rank_key)

    @property
    def best(self) -> CandidateRecord:
        return self.records[0]

    def to_text(self) -> str:
        """Ranked records, one per line; independent of wall-clock and worker count."""
        lines = [REPORT_HEADER]
        for rank, r in enumerate(self.records, 1):
            lines.append("\t".join([
                str(rank), str(r.sample_index), str(r.seed), _fmt(r.score.value),
                str(int(r.score.singular)), _fmt(r.hd_score.value if r.hd_score else None),
                _fmt(r.trained_accuracy), r.genotype.code_string()]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SearchReport":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != REPORT_HEADER:
            raise ValueError("not a search report (bad header)")
        records = []
        for ln in lines[1:]:
            _, index, seed, score, singular, hd, acc, code = ln.split("\t")
            s = float(score)
            h = _parse_float(hd)
            records.append(CandidateRecord(
                int(index), int(seed), CellGenotype.from_code_string(code),
                ArchitectureScore(s, bool(int(singular))),
                None if h is None else ArchitectureScore(h, h == -math.inf),
                _parse_float(acc)))
        return cls(records)

    def summary(self) -> str:
        best = self.best
        finite = sum(not r.score.singular for r in self.records)
        return (f"candidates: {len(self.records)}\n"
                f"finite scores: {finite}\n"
                f"best index: {best.sample_index}\n"
                f"best score: {best.score.value!r}\n"
                f"best genotype: {best.genotype.code_string()}\n"
                f"search time (s): {self.duration:.3f}\n")

    def write(self, directory: str | Path, top_k: int = 5) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.tsv").write_text(self.to_text())
        (directory / "summary.txt").write_text(self.summary())
        gdir = directory / "genotypes"
        gdir.mkdir(exist_ok=True)
        for rank, r in enumerate(self.records[:top_k], 1):
            (gdir / f"rank{rank:03d}_index{r.sample_index}.json").write_text(serialize_genotype(r.genotype))


@contextmanager
def single_thread():
    """Pin torch to one intra-op thread so float reductions are schedule-independent."""
    prev = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        yield
    finally:
        torch.set_num_threads(prev)


def _evaluate(args) -> CandidateRecord:
    k, seed, mode, batch, cfg, layers, timesteps = args
    g = candidate_genotype(seed, mode)
    with single_thread():
        sahd_score, hd_score = score_both(g, batch, cfg, seed, layers, timesteps)
    return CandidateRecord(k, seed, g, sahd_score, hd_score)


def map_ordered(fn, tasks: list, workers: int) -> list:
    """Apply ``fn`` to every task, in-process or across spawned workers; keeps task order."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers, mp_context=get_context("spawn")) as pool:
        return list(pool.map(fn, tasks))


def random_search(num_candidates: int, mode: Mode | str, batch: torch.Tensor, cfg: NetworkConfig,
                  master_seed: int, workers: int = 1,
                  layers: LayerSelection | str = LayerSelection.DOWNSTREAM,
                  timesteps: int | None = None) -> SearchReport:
    """Sample and score ``num_candidates`` genotypes on one shared batch."""
    if num_candidates < 1:
        raise ValueError("num_candidates must be >= 1")
    mode = Mode.parse(mode) if isinstance(mode, str) else mode
    layers = LayerSelection(layers)
    start = time.perf_counter()
    tasks = [(k, candidate_seed(master_seed, k), mode, batch, cfg, layers, timesteps)
             for k in range(num_candidates)]
    records = map_ordered(_evaluate, tasks, workers)
    return SearchReport(records, time.perf_counter() - start,
                        {"num_candidates": num_candidates, "mode": mode.value, "master_seed": master_seed})


# --- rank correlation ----------------------------------------------------------

def _pair_counts(xs, ys) -> tuple[int, int, int, int, int]:
    """(concordant, discordant, ties in x, ties in y, total pairs)."""
    xs, ys = list(xs), list(ys)
    if len(xs) != len(ys):
        raise ValueError("xs and ys must have equal length")
    nc = nd = tx = ty = 0
    n = len(xs)
    for i in range(n):
        for j in range(i + 1, n):
            dx = (xs[i] > xs[j]) - (xs[i] < xs[j])
            dy = (ys[i] > ys[j]) - (ys[i] < ys[j])
            tx += dx == 0
            ty += dy == 0
            if dx * dy > 0:
                nc += 1
            elif dx * dy < 0:
                nd += 1
    return nc, nd, tx, ty, n * (n - 1) // 2


def kendall_tau(xs, ys) -> float | None:
    """Tie-corrected tau-b; ``None`` when either sequence is constant."""
    if len(xs) < 2:
        raise ValueError("need at least 2 pairs")
    nc, nd, tx, ty, n0 = _pair_counts(xs, ys)
    denom = math.sqrt((n0 - tx) * (n0 - ty))
    if denom == 0:
        return None
    return (nc - nd) / denom


def pairwise_sign_test(xs, ys) -> tuple[int, int, float]:
    """One-sided sign test over untied pairs: P(>= concordant | fair coin)."""
    nc, nd, *_ = _pair_counts(xs, ys)
    if nc + nd == 0:
        return nc, nd, 1.0
    return nc, nd, float(binomtest(nc, nc + nd, 0.5, alternative="greater").pvalue)


# --- attribute statistics --------------------------------------------------------

ATTRIBUTES = ("forward", "backward", "total", "skip_connect", "conv_3x3", "conv_1x1", "avg_pool_3x3",
              "fw_skip_connect", "fw_conv_3x3", "fw_conv_1x1", "fw_avg_pool_3x3",
              "bw_skip_connect", "bw_conv_3x3", "bw_conv_1x1", "bw_avg_pool_3x3")


@dataclass
class Bucket:
    attribute: str
    value: int
    count: int
    finite: int
    mean: float | None


def record_y(r: CandidateRecord, y: str) -> float | None:
    if y == "score":
        return r.score.value
    if y == "accuracy":
        return r.trained_accuracy
    raise ValueError(f"unknown y {y!r}")


def attribute_stats(records: list[CandidateRecord], y: str = "score",
                    attributes=ATTRIBUTES) -> list[Bucket]:
    """Count and mean of ``y`` for every value of every attribute.

    The mean is over finite values only; ``finite`` says how many there were.
    """
    groups: dict[tuple[str, int], list[float]] = defaultdict(list)
    for r in records:
        value = record_y(r, y)
        counts = count_attributes(r.genotype)
        for a in attributes:
            groups[(a, counts[a])].append(value)
    buckets = []
    for a in attributes:
        for v in sorted(val for (name, val) in groups if name == a):
            ys = groups[(a, v)]
            vals = [u for u in ys if u is not None and math.isfinite(u)]
            buckets.append(Bucket(a, v, len(ys), len(vals), sum(vals) / len(vals) if vals else None))
    return buckets


def buckets_to_tsv(buckets: list[Bucket]) -> str:
    lines = ["attribute\tvalue\tcount\tfinite\tmean"]
    for b in buckets:
        lines.append(f"{b.attribute}\t{b.value}\t{b.count}\t{b.finite}\t{_fmt(b.mean)}")
    return "\n".join(lines) + "\n"
