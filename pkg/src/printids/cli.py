"""Command-line entry point: ``printids <subcommand> ...``.

Errors print one line, ``printids: error[<exit code>] <Kind>: <message>``,
to stderr and exit with the code of the error kind.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .capture import DEFAULT_IDLE_TIMEOUT, read_pcap, reassemble_sessions
from .dataset import LABEL_VALUES, UNKNOWN, Dataset, SessionMeta, load_csv, save_csv
from .errors import ArgumentError, PrintIDSError
from .evaluation import cross_validate
from .features import FEATURE_INDEX, FEATURE_NAMES, extract_matrix
from .learners import KINDS, load_model, save_model, train
from .selection import METHODS, rank_features, top_k, write_ranking_csv
from .synthesis import SynthConfig, gen_corpus

log = logging.getLogger("printids")

# leading features reported as alert context
CONTEXT_FEATURES = (
    "packet_size_var", "packet_size_stdev", "packet_size_max", "packet_size_avg",
    "packet_inter_arrival_A_median", "packet_inter_arrival_B_median",
    "packet_size_A_max", "packet_size_B_max", "bytes_A_B_ratio",
)
EXIT_NOT_FOUND = 2


def _pcap_dataset(pcap_path, label: str | None, idle_timeout: float) -> tuple[Dataset, list]:
    try:
        parsed = read_pcap(pcap_path)
    except PrintIDSError as exc:
        raise type(exc)(f"{pcap_path}: {exc}") from None
    sessions = reassemble_sessions(parsed.packets, idle_timeout)
    log.info("%s: %d packets, %d skipped, %d sessions", pcap_path, len(parsed.packets), parsed.skipped, len(sessions))
    y = np.full(len(sessions), LABEL_VALUES[label] if label else UNKNOWN)
    meta = tuple(SessionMeta(str(pcap_path), s.key, s.start_time) for s in sessions)
    return Dataset(extract_matrix(sessions), y, meta=meta if sessions else None), sessions


def cmd_extract(args) -> int:
    ds, _ = _pcap_dataset(args.pcap, args.label, args.idle_timeout)
    save_csv(ds, args.out)
    print(f"{len(ds)} sessions -> {args.out}")
    return len(ds)


def cmd_synth(args) -> int:
    cfg = SynthConfig.from_json(args.config) if args.config else SynthConfig()
    overrides = {k: v for k, v in (("seed", args.seed), ("n_benign", args.n_benign),
                                   ("n_malicious", args.n_malicious)) if v is not None}
    if overrides:
        cfg = SynthConfig.from_dict({**cfg.to_dict(), **overrides})
    if not (args.csv or args.pcap):
        raise ArgumentError("synth needs --csv and/or --pcap")
    corpus = gen_corpus(cfg, pcap_path=args.pcap, manifest_path=args.manifest)
    if args.csv:
        save_csv(corpus.dataset, args.csv)
    counts = corpus.manifest["counts"]
    print(f"{counts['benign']} benign + {counts['malicious']} malicious sessions (seed {cfg.seed})")
    return 0


def cmd_train(args) -> int:
    ds = load_csv(args.csv)
    if args.top_k:
        ds = ds.columns(top_k(rank_features(ds, args.method), args.top_k))
    model = train(args.kind, ds, seed=args.seed)
    save_model(model, args.model_out)
    print(f"{args.kind} trained on {len(ds)} instances x {len(ds.schema)} features "
          f"in {model.training_seconds:.2f}s -> {args.model_out}")
    return 0


def cmd_select(args) -> int:
    ranking = rank_features(load_csv(args.csv), args.method, n_bins=args.bins)
    for rank, i in enumerate(top_k(ranking, args.k), start=1):
        print(f"{rank:3d}  {ranking.schema[i]:<34s} {ranking.scores[i]:.6f}")
    if args.out:
        write_ranking_csv(ranking, args.out, args.k)
    return 0


def cmd_evaluate(args) -> int:
    ds = load_csv(args.csv)
    subset = None
    if args.top_k:
        subset = top_k(rank_features(ds, args.method), args.top_k)
    report = cross_validate(ds, args.kinds, k=args.folds, seed=args.seed, feature_subset=subset)
    print(report.format_table(include_timing=True), end="")
    if args.report_out:
        Path(args.report_out).write_text(report.to_json(include_timing=args.with_timing), encoding="utf-8")
    return 0


def cmd_detect(args) -> int:
    model = load_model(args.model)
    ds, sessions = _pcap_dataset(args.pcap, None, args.idle_timeout)
    missing = [n for n in model.schema if n not in FEATURE_INDEX]
    if missing:
        raise ArgumentError(f"model schema has unknown features {missing}")
    cols = [FEATURE_INDEX[n] for n in model.schema]
    threshold = model.decision_point if args.threshold is None else args.threshold
    n_alerts = 0
    out = open(args.alerts_out, "w", encoding="utf-8") if args.alerts_out else sys.stdout
    try:
        if len(ds):
            _, scores = model.predict_many(ds.X[:, cols])
        else:
            scores = np.zeros(0)
        for s, fv, score in zip(sessions, ds.X, scores):
            if score < threshold:
                continue
            n_alerts += 1
            out.write(json.dumps({
                "session": {"addr_a": s.key[0], "port_a": s.key[1], "addr_b": s.key[2], "port_b": s.key[3]},
                "start_time": s.start_time,
                "label": "malicious",
                "malicious_score": float(score),
                "threshold": threshold,
                "model": {"kind": model.kind, "path": str(args.model)},
                "context": {n: float(fv[FEATURE_INDEX[n]]) for n in CONTEXT_FEATURES},
            }, sort_keys=True) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    print(f"{n_alerts} alerts from {len(sessions)} sessions", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="printids", description="Printer-protocol intrusion detection on TCP session metadata")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("extract", help="pcap -> per-session feature CSV")
    s.add_argument("pcap")
    s.add_argument("--out", required=True)
    s.add_argument("--label", choices=["benign", "malicious"])
    s.add_argument("--idle-timeout", type=float, default=DEFAULT_IDLE_TIMEOUT)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    s.add_argument("--config", help="SynthConfig JSON; defaults apply to missing keys")
    s.add_argument("--csv")
    s.add_argument("--pcap")
    s.add_argument("--manifest")
    s.add_argument("--seed", type=int)
    s.add_argument("--n-benign", type=int)
    s.add_argument("--n-malicious", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="fit one classifier and save it as JSON")
    s.add_argument("csv")
    s.add_argument("--kind", choices=KINDS, default="decision_tree_c45")
    s.add_argument("--model-out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--top-k", type=int, help="train on the top-k ranked features only")
    s.add_argument("--method", choices=METHODS, default="info_gain")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("select", help="rank features")
    s.add_argument("csv")
    s.add_argument("--method", choices=METHODS, default="info_gain")
    s.add_argument("-k", "--k", type=int, default=10)
    s.add_argument("--bins", type=int, default=10)
    s.add_argument("--out", help="write (rank, feature_name, score, method) CSV")
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("evaluate", help="k-fold cross-validation table")
    s.add_argument("csv")
    s.add_argument("--kinds", nargs="+", choices=KINDS, default=list(KINDS))
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--top-k", type=int)
    s.add_argument("--method", choices=METHODS, default="info_gain")
    s.add_argument("--report-out", help="JSON report path")
    s.add_argument("--with-timing", action="store_true", help="include wall-clock training times in the JSON report")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("detect", help="classify pcap sessions and emit JSON Lines alerts")
    s.add_argument("pcap")
    s.add_argument("--model", required=True)
    s.add_argument("--alerts-out", help="default: stdout")
    s.add_argument("--threshold", type=float, help="default: the model's decision point")
    s.add_argument("--idle-timeout", type=float, default=DEFAULT_IDLE_TIMEOUT)
    s.set_defaults(func=cmd_detect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except PrintIDSError as exc:
        msg = " ".join(str(exc).split())
        print(f"printids: error[{exc.exit_code}] {type(exc).__name__}: {msg}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"printids: error[{EXIT_NOT_FOUND}] FileNotFound: {exc.filename}", file=sys.stderr)
        return EXIT_NOT_FOUND
    return 0


if __name__ == "__main__":
    sys.exit(main())
