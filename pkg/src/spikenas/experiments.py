"""Score-versus-accuracy correlation runs at desk scale."""
from __future__ import annotations

from dataclasses import dataclass

from .data import Dataset
from .genotype import Mode
from .network import NetworkConfig, build_network
from .scoring import LayerSelection, score_both
from .search import (CandidateRecord, SearchReport, candidate_genotype, candidate_seed, kendall_tau,
                     map_ordered, pairwise_sign_test, scoring_batch, single_thread)
from .trainer import SurrogateConfig, TrainConfig, evaluate, train


@dataclass
class CorrelationReport:
    records: list[CandidateRecord]
    tau_sahd: float | None
    tau_hd: float | None
    sign_test: tuple[int, int, float]  # concordant, discordant, one-sided p for SAHD

    def table(self) -> str:
        lines = ["index\tseed\tsahd_score\thd_score\ttest_accuracy\tgenotype"]
        for r in sorted(self.records, key=lambda r: r.sample_index):
            lines.append(f"{r.sample_index}\t{r.seed}\t{r.score.value!r}\t{r.hd_score.value!r}\t"
                         f"{r.trained_accuracy!r}\t{r.genotype.code_string()}")
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        nc, nd, p = self.sign_test
        return (f"population: {len(self.records)}\n"
                f"kendall_tau_sahd: {self.tau_sahd!r}\n"
                f"kendall_tau_hd: {self.tau_hd!r}\n"
                f"sahd_concordant_pairs: {nc}\n"
                f"sahd_discordant_pairs: {nd}\n"
                f"sahd_sign_test_p: {p!r}\n")


def _score_and_train(args) -> CandidateRecord:
    k, seed, mode, score_batch, cfg, data, tcfg, scfg, epochs, layers = args
    g = candidate_genotype(seed, mode)
    with single_thread():
        sahd, hd = score_both(g, score_batch, cfg, seed, layers)
        net = build_network(g, cfg, seed)
        if epochs > 0:
            net, _ = train(net, data, tcfg, scfg, seed, evaluate_each_epoch=False)
        acc = evaluate(net, data.test)
    return CandidateRecord(k, seed, g, sahd, hd, acc)


def correlate(population: int, mode: Mode | str, data: Dataset, cfg: NetworkConfig, tcfg: TrainConfig,
              scfg: SurrogateConfig, master_seed: int, epochs: int | None = None,
              score_batch_size: int = 16, workers: int = 1,
              layers: LayerSelection | str = LayerSelection.DOWNSTREAM) -> CorrelationReport:
    """Score ``population`` sampled genotypes with both metrics, train each, correlate."""
    if population < 5:
        raise ValueError("population must be >= 5")
    mode = Mode.parse(mode) if isinstance(mode, str) else mode
    epochs = tcfg.epochs if epochs is None else epochs
    if epochs > 0 and epochs != tcfg.epochs:
        tcfg = TrainConfig(**{**tcfg.__dict__, "epochs": epochs})
    score_batch = scoring_batch(data.train.images, score_batch_size, master_seed)
    tasks = [(k, candidate_seed(master_seed, k), mode, score_batch, cfg, data, tcfg, scfg, epochs,
              LayerSelection(layers)) for k in range(population)]
    records = map_ordered(_score_and_train, tasks, workers)
    acc = [r.trained_accuracy for r in records]
    sahd = [r.score.value for r in records]
    hd = [r.hd_score.value for r in records]
    return CorrelationReport(records, kendall_tau(sahd, acc), kendall_tau(hd, acc),
                             pairwise_sign_test(sahd, acc))


def as_search_report(report: CorrelationReport) -> SearchReport:
    return SearchReport(list(report.records))

