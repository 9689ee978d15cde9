"""Mean SAHD and raw Hamming distance of i.i.d. Bernoulli patterns over a sparsity grid.

SAHD should sit at alpha = N_A / 2 everywhere; raw HD follows
N_A (r_i (1 - r_j) + (1 - r_i) r_j).
"""
import argparse

import numpy as np

from spikenas.scoring import sahd


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n-a", type=int, default=10_000)
    p.add_argument("--pairs", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the table here as TSV")
    args = p.parse_args()

    rng = np.random.default_rng(args.seed)
    alpha = 0.5 * args.n_a
    rows = ["r_i\tr_j\tsahd_over_alpha\thd_mean\thd_expected"]
    for r_i in np.round(np.arange(0.1, 1.0, 0.1), 1):
        for r_j in np.round(np.arange(0.1, 1.0, 0.1), 1):
            a = rng.random((args.pairs, args.n_a)) >= r_i
            b = rng.random((args.pairs, args.n_a)) >= r_j
            mean_sahd = np.mean([sahd(x, y) for x, y in zip(a, b)])
            mean_hd = np.count_nonzero(a != b, axis=1).mean()
            expected = args.n_a * (r_i * (1 - r_j) + (1 - r_i) * r_j)
            rows.append(f"{r_i}\t{r_j}\t{mean_sahd / alpha:.4f}\t{mean_hd:.1f}\t{expected:.1f}")
    text = "\n".join(rows) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text, end="")


if __name__ == "__main__":
    main()
