"""Score a sampled population with SAHD and HD, train each, report Kendall tau against accuracy.

Defaults are the desk setting: 20 genotypes, 4-class 16x16 synthetic data,
C = 16, T = 5, 20 epochs.
"""
import argparse
import time
from pathlib import Path

from spikenas.data import SyntheticSpec, make_synthetic
from spikenas.experiments import correlate
from spikenas.network import NetworkConfig
from spikenas.trainer import SurrogateConfig, TrainConfig


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--population", type=int, default=20)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--mode", default="forward_and_backward")
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--timesteps", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="runs/correlation")
    args = p.parse_args()

    data = make_synthetic(SyntheticSpec(num_classes=4, samples_per_class=64, test_per_class=64, image_size=16))
    cfg = NetworkConfig(channels=args.channels, timesteps=args.timesteps, num_classes=4, input_dims=(3, 16, 16))
    tcfg = TrainConfig(lr=args.lr, epochs=max(args.epochs, 1), augment=False)
    start = time.perf_counter()
    rep = correlate(args.population, args.mode, data, cfg, tcfg, SurrogateConfig(), args.seed,
                    epochs=args.epochs, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.tsv").write_text(rep.table())
    summary = rep.summary() + f"duration (s): {time.perf_counter() - start:.1f}\n"
    (out / "summary.txt").write_text(summary)
    print(rep.table(), end="")
    print(summary, end="")


if __name__ == "__main__":
    main()
