"""Rank the 75 features with info gain, gain ratio and |Pearson r| and
report which features several methods agree on.

    python3 scripts/feature_selection.py --k 10 --csv-dir results/
"""

import argparse
from pathlib import Path

from printids.selection import METHODS, rank_features, shared_top_features, write_ranking_csv
from printids.synthesis import SynthConfig, gen_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-benign", type=int, default=8813)
    ap.add_argument("--n-malicious", type=int, default=5500)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--bins", type=int, default=10)
    ap.add_argument("--csv-dir", type=Path)
    args = ap.parse_args()

    ds = gen_corpus(SynthConfig(seed=args.seed, n_benign=args.n_benign, n_malicious=args.n_malicious)).dataset
    rankings = [rank_features(ds, m, n_bins=args.bins) for m in METHODS]
    for r in rankings:
        print(f"\n{r.method}")
        for rank, name in enumerate(r.top(args.k), start=1):
            print(f"  {rank:2d}. {name:34s} {r.scores[ds.schema.index(name)]:.4f}")
        if args.csv_dir:
            args.csv_dir.mkdir(parents=True, exist_ok=True)
            write_ranking_csv(r, args.csv_dir / f"ranking_{r.method}.csv")
    shared = shared_top_features(rankings, args.k)
    print(f"\n{len(shared)} features in the top-{args.k} of at least two methods:")
    for name in shared:
        print(f"  {name}")


if __name__ == "__main__":
    main()
