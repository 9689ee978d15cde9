"""Random search at the desk setting, then mean score per architecture attribute value."""
import argparse

from spikenas.data import SyntheticSpec, make_synthetic
from spikenas.network import NetworkConfig
from spikenas.search import attribute_stats, buckets_to_tsv, random_search


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--candidates", type=int, default=100)
    p.add_argument("--mode", default="forward_and_backward")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="write the bucket table here as TSV")
    args = p.parse_args()

    batch = make_synthetic(SyntheticSpec()).train.images[:16]
    cfg = NetworkConfig(channels=16, timesteps=5, num_classes=4, input_dims=(3, 16, 16))
    report = random_search(args.candidates, args.mode, batch, cfg, args.seed, workers=args.workers)
    table = buckets_to_tsv(attribute_stats(report.records))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(table)
    print(report.summary(), end="")
    print(table, end="")


if __name__ == "__main__":
    main()
