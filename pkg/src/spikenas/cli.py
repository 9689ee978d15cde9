"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 configuration or parse error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from datetime import datetime
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, dump_config, load_config
from .errors import ConfigError, GenotypeParseError
from .genotype import Mode, count_attributes, deserialize_genotype, sample_genotype, serialize_genotype, validate_genotype
from .network import build_network
from .scoring import collect_trace, score_trace
from .search import scoring_batch
from .trace import dump_trace

log = logging.getLogger("spikenas")


class UsageError(Exception):
    """Bad configuration or unparseable input: exit code 2."""


def _run_dir(base: str | Path, command: str) -> Path:
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S-%f")
    path = Path(base) / f"{command}-{stamp}"
    k = 0
    while path.exists():
        k += 1
        path = Path(base) / f"{command}-{stamp}-{k}"
    path.mkdir(parents=True)
    return path


def _load(args) -> RunConfig:
    try:
        return load_config(args.config)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def _override(cfg: RunConfig, section: str, **values) -> RunConfig:
    values = {k: v for k, v in values.items() if v is not None}
    if not values:
        return cfg
    try:
        sec = dataclasses.replace(getattr(cfg, section), **values)
        return dataclasses.replace(cfg, **{section: sec}).validate()
    except (ConfigError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _read_genotype(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read genotype file: {exc}") from None
    try:
        g = deserialize_genotype(text)
    except GenotypeParseError as exc:
        raise UsageError(f"{path}: {exc}") from None
    violations = validate_genotype(g)
    if violations:
        raise UsageError(f"{path}: bidirectional node pairs {violations}")
    return g


def _snapshot(run_dir: Path, cfg: RunConfig) -> None:
    (run_dir / "config.yaml").write_text(dump_config(cfg))


# --- commands ----------------------------------------------------------------

def cmd_search(args) -> int:
    from .search import random_search

    cfg = _override(_load(args), "search", num_candidates=args.candidates, mode=args.mode,
                    seed=args.seed, workers=args.workers, top_k=args.top_k)
    data = cfg.load_dataset()
    batch = scoring_batch(data.train.images, cfg.scoring.batch_size, cfg.search.seed)
    report = random_search(cfg.search.num_candidates, cfg.search.mode, batch, cfg.network_config(),
                           cfg.search.seed, workers=cfg.search.workers, layers=cfg.scoring.layers)
    run_dir = _run_dir(args.out or cfg.output_dir, "search")
    _snapshot(run_dir, cfg)
    report.write(run_dir, cfg.search.top_k)
    sys.stdout.write(report.summary())
    print(f"run directory: {run_dir}")
    return 0


def cmd_score(args) -> int:
    g = _read_genotype(args.genotype)
    cfg = _load(args)
    data = cfg.load_dataset()
    seed = cfg.search.seed if args.seed is None else args.seed
    batch = scoring_batch(data.train.images, cfg.scoring.batch_size, seed)
    trace = collect_trace(g, batch, cfg.network_config(), seed)
    sahd = score_trace(trace, "sahd", cfg.scoring.layers)
    print(f"sahd_score: {sahd.value!r}")
    print(f"sahd_singular: {sahd.singular}")
    if not args.no_hd:
        hd = score_trace(trace, "hd", cfg.scoring.layers)
        print(f"hd_score: {hd.value!r}")
        print(f"hd_singular: {hd.singular}")
    if args.dump_trace:
        dump_trace(trace, args.dump_trace)
    return 0


def cmd_train(args) -> int:
    from .trainer import evaluate, metrics_to_tsv, save_checkpoint, train

    g = _read_genotype(args.genotype)
    cfg = _override(_load(args), "train", lr=args.lr, epochs=args.epochs)
    seed = cfg.search.seed if args.seed is None else args.seed
    data = cfg.load_dataset()
    net = build_network(g, cfg.network_config(), seed)
    run_dir = _run_dir(args.out or cfg.output_dir, "train")
    _snapshot(run_dir, cfg)
    (run_dir / "genotype.json").write_text(serialize_genotype(g))
    save_checkpoint(net, run_dir / "initial.ckpt")
    net, history = train(net, data, cfg.train, cfg.surrogate, seed)
    save_checkpoint(net, run_dir / "final.ckpt", {"epochs": len(history)})
    (run_dir / "metrics.tsv").write_text(metrics_to_tsv(history))
    print(f"final test accuracy: {evaluate(net, data.test)!r}")
    print(f"run directory: {run_dir}")
    return 0


def cmd_correlate(args) -> int:
    from .experiments import correlate

    cfg = _override(_load(args), "correlate", population=args.population, epochs=args.epochs,
                    seed=args.seed, workers=args.workers)
    if args.mode:
        cfg = _override(cfg, "search", mode=args.mode)
    data = cfg.load_dataset()
    start = time.perf_counter()
    report = correlate(cfg.correlate.population, cfg.search.mode, data, cfg.network_config(), cfg.train,
                       cfg.surrogate, cfg.correlate.seed, epochs=cfg.correlate.epochs,
                       score_batch_size=cfg.scoring.batch_size, workers=cfg.correlate.workers,
                       layers=cfg.scoring.layers)
    run_dir = _run_dir(args.out or cfg.output_dir, "correlate")
    _snapshot(run_dir, cfg)
    (run_dir / "table.tsv").write_text(report.table())
    summary = report.summary() + f"duration (s): {time.perf_counter() - start:.1f}\n"
    (run_dir / "summary.txt").write_text(summary)
    sys.stdout.write(summary)
    print(f"run directory: {run_dir}")
    return 0


def cmd_stats(args) -> int:
    from .search import SearchReport, attribute_stats, buckets_to_tsv

    path = Path(args.report)
    if path.is_dir():
        path = path / "report.tsv"
    text = path.read_text()  # a missing report is a runtime failure
    try:
        report = SearchReport.from_text(text)
    except (ValueError, GenotypeParseError) as exc:
        raise UsageError(f"{path}: {exc}") from None
    table = buckets_to_tsv(attribute_stats(report.records, args.y))
    if args.out:
        Path(args.out).write_text(table)
    sys.stdout.write(table)
    return 0


def cmd_sample(args) -> int:
    try:
        mode = Mode.parse(args.mode)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = serialize_genotype(sample_genotype(np.random.default_rng(args.seed), mode))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_check(args) -> int:
    g = _read_genotype(args.genotype)
    print(f"code: {g.code_string()}")
    for key, value in count_attributes(g).items():
        print(f"{key}: {value}")
    return 0


def cmd_default_config(args) -> int:
    sys.stdout.write(dump_config(RunConfig()))
    return 0


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spikenas", description="Training-free architecture search for SNNs")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="YAML run config (defaults apply when omitted)")
        sp.add_argument("--out", help="base output directory (default: config output_dir)")
        return sp

    s = with_config(sub.add_parser("search", help="random search over genotypes"))
    s.add_argument("--candidates", type=_positive)
    s.add_argument("--mode", help="forward | backward (or forward_only | forward_and_backward)")
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=_positive)
    s.add_argument("--top-k", type=int, dest="top_k")
    s.set_defaults(fn=cmd_search)

    s = with_config(sub.add_parser("score", help="score one genotype file"))
    s.add_argument("genotype")
    s.add_argument("--seed", type=int)
    s.add_argument("--no-hd", action="store_true", help="skip the raw Hamming-distance score")
    s.add_argument("--dump-trace", help="write the activation trace to this file")
    s.set_defaults(fn=cmd_score)

    s = with_config(sub.add_parser("train", help="train one genotype with surrogate gradients"))
    s.add_argument("genotype")
    s.add_argument("--epochs", type=_positive)
    s.add_argument("--lr", type=float)
    s.add_argument("--seed", type=int)
    s.set_defaults(fn=cmd_train)

    s = with_config(sub.add_parser("correlate", help="score, train and rank-correlate a population"))
    s.add_argument("--population", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--mode")
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=_positive)
    s.set_defaults(fn=cmd_correlate)

    s = sub.add_parser("stats", help="attribute tables from a search report")
    s.add_argument("report", help="report.tsv or a search run directory")
    s.add_argument("--y", choices=("score", "accuracy"), default="score")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_stats)

    s = sub.add_parser("sample-genotype", help="write a random genotype")
    s.add_argument("--mode", default="forward_and_backward")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_sample)

    s = sub.add_parser("check-genotype", help="validate a genotype file and print its attributes")
    s.add_argument("genotype")
    s.set_defaults(fn=cmd_check)

    s = sub.add_parser("default-config", help="print the default config as YAML")
    s.set_defaults(fn=cmd_default_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help/--version, 2 for bad usage
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level reporter
        log.debug("command failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
