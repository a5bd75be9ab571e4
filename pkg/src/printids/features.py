"""Per-session metadata features: 28 size, 25 time and 22 TCP-property values.

Sizes are TCP payload lengths. Time values are derived from integer
microsecond timestamps so that shifting a capture in time changes nothing.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .capture import ACK, PSH, RST, URG, Direction, TcpSession
from .errors import ContractError

STAT_FIELDS = ("avg", "entropy", "max", "median", "min", "stdev", "sum", "var")

FEATURE_NAMES = (
    "ack", "ack_A", "ack_B",
    "bytes", "bytes_A", "bytes_A_B_ratio", "bytes_B",
    "ds_field_A", "ds_field_B",
    "duration",
    *(f"packet_inter_arrival_A_{s}" for s in STAT_FIELDS),
    *(f"packet_inter_arrival_B_{s}" for s in STAT_FIELDS),
    *(f"packet_inter_arrival_{s}" for s in STAT_FIELDS),
    *(f"packet_size_A_{s}" for s in STAT_FIELDS),
    *(f"packet_size_B_{s}" for s in STAT_FIELDS),
    *(f"packet_size_{s}" for s in STAT_FIELDS),
    "packets", "packets_A", "packets_A_B_ratio", "packets_B",
    "push", "push_A", "push_B",
    "reset", "reset_A", "reset_B",
    "tcp_analysis_duplicate_ack", "tcp_analysis_keep_alive",
    "tcp_analysis_lost_segment", "tcp_analysis_out_of_order",
    "urg", "urg_A", "urg_B",
)
N_FEATURES = len(FEATURE_NAMES)
FEATURE_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}

# Features whose values are counts (integers stored as floats).
COUNT_FEATURES = frozenset(
    n for n in FEATURE_NAMES
    if n.split("_")[0] in ("ack", "push", "reset", "urg", "packets", "tcp")
    and not n.endswith("ratio")
) | {"bytes", "bytes_A", "bytes_B", "ds_field_A", "ds_field_B"}

_FLAG_FEATURES = (("ack", ACK), ("push", PSH), ("reset", RST), ("urg", URG))
_ANOMALIES = ("duplicate_ack", "keep_alive", "lost_segment", "out_of_order")


def feature_names() -> list[str]:
    return list(FEATURE_NAMES)


@dataclass(frozen=True)
class StatSummary:
    avg: float = 0.0
    entropy: float = 0.0
    max: float = 0.0
    median: float = 0.0
    min: float = 0.0
    stdev: float = 0.0
    sum: float = 0.0
    var: float = 0.0

    def as_tuple(self) -> tuple:
        return (self.avg, self.entropy, self.max, self.median, self.min, self.stdev, self.sum, self.var)


_EMPTY = StatSummary()


def compute_stats(series: Sequence[float]) -> StatSummary:
    """Descriptive statistics with population variance and exact-value
    Shannon entropy (bits). Empty input gives all zeros."""
    n = len(series)
    if n == 0:
        return _EMPTY
    if n == 1:
        v = float(series[0])
        return StatSummary(avg=v, entropy=0.0, max=v, median=v, min=v, stdev=0.0, sum=v, var=0.0)
    ordered = sorted(series)
    total = math.fsum(ordered)
    mean = total / n
    var = math.fsum((x - mean) ** 2 for x in ordered) / n
    mid = n // 2
    median = ordered[mid] if n % 2 else (ordered[mid - 1] + ordered[mid]) / 2
    counts = Counter(ordered)
    if len(counts) == 1:
        entropy = 0.0
    else:
        entropy = -math.fsum((c / n) * math.log2(c / n) for c in counts.values())
        entropy = min(max(entropy, 0.0), math.log2(len(counts)))
    return StatSummary(
        avg=mean,
        entropy=entropy,
        max=float(ordered[-1]),
        median=float(median),
        min=float(ordered[0]),
        stdev=math.sqrt(var),
        sum=total,
        var=var,
    )


def _gaps(micros: list[int]) -> list[float]:
    return [(b - a) / 1_000_000 for a, b in zip(micros, micros[1:])]


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def extract_features(session: TcpSession) -> np.ndarray:
    """Return the 75-entry feature vector in canonical order."""
    packets = session.packets
    if not packets:
        raise ContractError("cannot extract features from a session with no packets")

    sizes = ([], [])
    times = ([], [])
    all_times = []
    flag_counts = {name: [0, 0] for name, _ in _FLAG_FEATURES}
    anomaly_counts = dict.fromkeys(_ANOMALIES, 0)
    ds_field = [None, None]

    for p, d in zip(packets, session.directions):
        d = int(d)
        sizes[d].append(p.payload_len)
        us = p.micros
        times[d].append(us)
        all_times.append(us)
        for name, flag in _FLAG_FEATURES:
            if p.flags & flag:
                flag_counts[name][d] += 1
        for a in p.anomalies:
            anomaly_counts[a] += 1
        if ds_field[d] is None:
            ds_field[d] = p.ds_field

    a, b = int(Direction.A_TO_B), int(Direction.B_TO_A)
    all_sizes = [p.payload_len for p in packets]
    f: dict[str, float] = {}
    for name, _ in _FLAG_FEATURES:
        ca, cb = flag_counts[name]
        f[name] = ca + cb
        f[f"{name}_A"] = ca
        f[f"{name}_B"] = cb

    bytes_a, bytes_b = sum(sizes[a]), sum(sizes[b])
    f["bytes"] = bytes_a + bytes_b
    f["bytes_A"] = bytes_a
    f["bytes_B"] = bytes_b
    f["bytes_A_B_ratio"] = _ratio(bytes_b, bytes_a)
    f["ds_field_A"] = ds_field[a] or 0
    f["ds_field_B"] = ds_field[b] or 0
    f["duration"] = (all_times[-1] - all_times[0]) / 1_000_000

    families = (
        ("packet_inter_arrival_A", _gaps(times[a])),
        ("packet_inter_arrival_B", _gaps(times[b])),
        ("packet_inter_arrival", _gaps(all_times)),
        ("packet_size_A", sizes[a]),
        ("packet_size_B", sizes[b]),
        ("packet_size", all_sizes),
    )
    for prefix, series in families:
        for stat, value in zip(STAT_FIELDS, compute_stats(series).as_tuple()):
            f[f"{prefix}_{stat}"] = value

    na, nb = len(sizes[a]), len(sizes[b])
    f["packets"] = na + nb
    f["packets_A"] = na
    f["packets_B"] = nb
    f["packets_A_B_ratio"] = _ratio(nb, na)
    for name in _ANOMALIES:
        f[f"tcp_analysis_{name}"] = anomaly_counts[name]

    return np.array([f[name] for name in FEATURE_NAMES], dtype=np.float64)


def extract_matrix(sessions: Sequence[TcpSession]) -> np.ndarray:
    if not sessions:
        return np.zeros((0, N_FEATURES))
    return np.vstack([extract_features(s) for s in sessions])
