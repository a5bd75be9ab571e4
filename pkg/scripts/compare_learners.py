"""Cross-validated comparison of the four learners on a synthetic corpus,
on all 75 features and on the top-10 info-gain features.

    python3 scripts/compare_learners.py --seed 0 --out results/
"""

import argparse
import json
from pathlib import Path

from printids.evaluation import cross_validate
from printids.learners import KINDS, format_tree, train, tree_features
from printids.selection import rank_features, top_k
from printids.synthesis import SynthConfig, gen_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-benign", type=int, default=8813)
    ap.add_argument("--n-malicious", type=int, default=5500)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--top-k", type=int, default=10)
    ap.add_argument("--out", type=Path, help="directory for JSON reports")
    args = ap.parse_args()

    cfg = SynthConfig(seed=args.seed, n_benign=args.n_benign, n_malicious=args.n_malicious)
    ds = gen_corpus(cfg).dataset
    full = cross_validate(ds, KINDS, k=args.folds, seed=args.seed)
    print(full.format_table())

    tree = full["decision_tree_c45"].confusion
    print("decision tree confusion matrix (rows: actual, columns: predicted)")
    print("              benign  malicious")
    print(f"  benign    {tree.tn:8d}  {tree.fp:9d}")
    print(f"  malicious {tree.fn:8d}  {tree.tp:9d}\n")

    subset = top_k(rank_features(ds, "info_gain"), args.top_k)
    reduced = cross_validate(ds, KINDS, k=args.folds, seed=args.seed, feature_subset=subset)
    print(f"top-{args.top_k} info_gain features: {', '.join(reduced.features)}")
    print(reduced.format_table())

    model = train("decision_tree_c45", ds, seed=args.seed)
    used = tree_features(model)
    print(f"full-data tree tests {len(used)} features:")
    print(format_tree(model, max_depth=6))

    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "cv_all_features.json").write_text(full.to_json(include_timing=True))
        (args.out / f"cv_top{args.top_k}.json").write_text(reduced.to_json(include_timing=True))
        (args.out / "tree_features.json").write_text(json.dumps(used, indent=2) + "\n")


if __name__ == "__main__":
    main()
