"""Aggregate statistics of generated benign and malicious sessions next to
the targets the generator is tuned for.

    python3 scripts/calibration_report.py --n 5000 --seeds 0 1 2
"""

import argparse

import numpy as np

from printids.dataset import BENIGN, MALICIOUS
from printids.features import FEATURE_INDEX, extract_matrix
from printids.synthesis import SynthConfig, generate_sessions, printer_on_side_b

# (description, target %, tolerance in points, or None for a lower bound)
TARGETS = (
    ("benign bytes_A_B_ratio < 0.38", 70.45, 3.0),
    ("benign packet_size_B_max < 50", 98.67, 3.0),
    ("benign printer on side B", 98.0, None),
    ("malicious packet_size_B_max < 50", 9.04, 6.0),
)


def measure(cfg):
    sessions, labels = generate_sessions(cfg)
    X = extract_matrix(sessions)
    ben, mal = labels == BENIGN, labels == MALICIOUS
    return (
        100 * np.mean(X[ben, FEATURE_INDEX["bytes_A_B_ratio"]] < 0.38),
        100 * np.mean(X[ben, FEATURE_INDEX["packet_size_B_max"]] < 50),
        100 * np.mean([printer_on_side_b(s, cfg) for s, y in zip(sessions, labels) if y == BENIGN]),
        100 * np.mean(X[mal, FEATURE_INDEX["packet_size_B_max"]] < 50),
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=5000, help="sessions per class")
    ap.add_argument("--seeds", type=int, nargs="+", default=[10])
    args = ap.parse_args()

    rows = np.array([measure(SynthConfig(seed=s, n_benign=args.n, n_malicious=args.n)) for s in args.seeds])
    print(f"{'statistic':36s} {'target':>8s} {'mean':>8s} {'min':>8s} {'max':>8s}  ok")
    for (name, target, tol), col in zip(TARGETS, rows.T):
        ok = col.min() >= target if tol is None else np.all(np.abs(col - target) <= tol)
        bound = f">={target:.2f}" if tol is None else f"{target:.2f}"
        print(f"{name:36s} {bound:>8s} {col.mean():8.2f} {col.min():8.2f} {col.max():8.2f}  {'yes' if ok else 'NO'}")


if __name__ == "__main__":
    main()
