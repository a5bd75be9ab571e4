"""Filter-style feature ranking: information gain, gain ratio, |Pearson r|."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import MALICIOUS, Dataset
from .errors import ArgumentError

METHODS = ("info_gain", "gain_ratio", "pearson")
DEFAULT_BINS = 10


@dataclass(frozen=True, eq=False)
class FeatureRanking:
    method: str
    schema: tuple
    scores: np.ndarray
    order: np.ndarray  # indices by descending score, ties by ascending index

    def top(self, k: int) -> list[str]:
        return [self.schema[i] for i in top_k(self, k)]


def _entropy_of_counts(counts: np.ndarray) -> float:
    counts = counts[counts > 0]
    if counts.size == 0:
        return 0.0
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def discretize(column: np.ndarray, n_bins: int = DEFAULT_BINS) -> np.ndarray:
    """Equal-frequency bin codes. Columns with at most ``n_bins`` distinct
    values keep one bin per value; tied values always share a bin."""
    values, codes = np.unique(column, return_inverse=True)
    if values.size <= n_bins:
        return codes
    edges = np.quantile(column, np.arange(1, n_bins) / n_bins)
    bins = np.searchsorted(np.unique(edges), column, side="right")
    return np.unique(bins, return_inverse=True)[1]


def _conditional_entropy(codes: np.ndarray, y: np.ndarray) -> float:
    n = y.shape[0]
    table = np.zeros((codes.max() + 1, 2))
    np.add.at(table, (codes, y), 1)
    total = 0.0
    for row in table:
        m = row.sum()
        if m:
            total += (m / n) * _entropy_of_counts(row)
    return total


def info_gain_scores(ds: Dataset, n_bins: int = DEFAULT_BINS, normalize: bool = False) -> np.ndarray:
    y = (ds.y == MALICIOUS).astype(np.int64)
    h_label = _entropy_of_counts(np.bincount(y, minlength=2).astype(float))
    scores = np.zeros(ds.X.shape[1])
    for j in range(ds.X.shape[1]):
        codes = discretize(ds.X[:, j], n_bins)
        gain = max(h_label - _conditional_entropy(codes, y), 0.0)
        if normalize:
            h_bins = _entropy_of_counts(np.bincount(codes).astype(float))
            gain = gain / h_bins if h_bins > 0 else 0.0
        scores[j] = gain
    return scores


def pearson_scores(ds: Dataset) -> np.ndarray:
    X = ds.X
    y = (ds.y == MALICIOUS).astype(np.float64)
    xc = X - X.mean(axis=0)
    yc = y - y.mean()
    sx = np.sqrt((xc * xc).sum(axis=0))
    sy = np.sqrt((yc * yc).sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (xc * yc[:, None]).sum(axis=0) / (sx * sy)
    r = np.where((sx > 0) & (sy > 0) & (np.ptp(X, axis=0) > 0), np.abs(r), 0.0)
    return np.clip(r, 0.0, 1.0)


def rank_features(ds: Dataset, method: str, n_bins: int = DEFAULT_BINS) -> FeatureRanking:
    if method not in METHODS:
        raise ArgumentError(f"unknown ranking method {method!r}; choose from {', '.join(METHODS)}")
    if len(ds) == 0:
        raise ArgumentError("cannot rank features of an empty dataset")
    if method == "pearson":
        scores = pearson_scores(ds)
    else:
        scores = info_gain_scores(ds, n_bins, normalize=(method == "gain_ratio"))
    order = np.lexsort((np.arange(scores.size), -scores))
    return FeatureRanking(method, ds.schema, scores, order)


def top_k(ranking: FeatureRanking, k: int) -> list[int]:
    if k < 0 or k > len(ranking.schema):
        raise ArgumentError(f"k={k} outside [0, {len(ranking.schema)}]")
    return [int(i) for i in ranking.order[:k]]


def project(ds: Dataset, indices: Sequence[int]) -> Dataset:
    for i in indices:
        if not 0 <= i < len(ds.schema):
            raise ArgumentError(f"feature index {i} outside schema of {len(ds.schema)}")
    return ds.columns(indices)


def shared_top_features(rankings: Sequence[FeatureRanking], k: int) -> list[str]:
    """Names that appear in the top-k of at least two rankings."""
    seen: dict[int, int] = {}
    for r in rankings:
        for i in top_k(r, k):
            seen[i] = seen.get(i, 0) + 1
    schema = rankings[0].schema
    return [schema[i] for i in sorted(seen) if seen[i] >= 2]


def write_ranking_csv(ranking: FeatureRanking, destination, k: int | None = None) -> None:
    k = len(ranking.schema) if k is None else k
    rows = [
        (rank, ranking.schema[i], repr(float(ranking.scores[i])), ranking.method)
        for rank, i in enumerate(top_k(ranking, k), start=1)
    ]
    if isinstance(destination, str) or hasattr(destination, "__fspath__"):
        with open(destination, "w", newline="", encoding="utf-8") as fh:
            _write_rows(fh, rows)
    else:
        _write_rows(destination, rows)


def _write_rows(fh, rows):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["rank", "feature_name", "score", "method"])
    writer.writerows(rows)
