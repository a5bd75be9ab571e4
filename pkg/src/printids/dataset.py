"""Labeled feature matrices, CSV persistence, stratified folds and scaling."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ArgumentError, CsvParseError, SchemaError
from .features import FEATURE_NAMES

BENIGN = 0
MALICIOUS = 1
UNKNOWN = -1
LABEL_NAMES = {BENIGN: "benign", MALICIOUS: "malicious", UNKNOWN: ""}
LABEL_VALUES = {"benign": BENIGN, "malicious": MALICIOUS, "": UNKNOWN}
LABEL_COLUMN = "label"


@dataclass(frozen=True)
class SessionMeta:
    """Provenance of one instance. Never fed to a learner."""

    source: str
    key: tuple
    start_time: float


@dataclass(frozen=True)
class LabeledInstance:
    features: np.ndarray
    label: int
    meta: SessionMeta | None = None


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    schema: tuple = FEATURE_NAMES
    meta: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            X = X.reshape(-1, len(self.schema))
        y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "schema", tuple(self.schema))
        if X.shape[1] != len(self.schema):
            raise SchemaError(f"matrix has {X.shape[1]} columns but schema has {len(self.schema)}")
        if X.shape[0] != y.shape[0]:
            raise SchemaError(f"{X.shape[0]} rows but {y.shape[0]} labels")
        if self.meta is not None and len(self.meta) != len(y):
            raise SchemaError("meta length does not match instance count")

    def __len__(self) -> int:
        return self.y.shape[0]

    @classmethod
    def empty(cls, schema: Sequence[str] = FEATURE_NAMES) -> "Dataset":
        return cls(np.zeros((0, len(schema))), np.zeros(0, dtype=np.int64), tuple(schema))

    @classmethod
    def from_instances(cls, instances: Sequence[LabeledInstance], schema=FEATURE_NAMES) -> "Dataset":
        if not instances:
            return cls.empty(schema)
        X = np.vstack([inst.features for inst in instances])
        y = np.array([inst.label for inst in instances])
        meta = tuple(inst.meta for inst in instances)
        return cls(X, y, schema, None if any(m is None for m in meta) else meta)

    def instances(self) -> Iterator[LabeledInstance]:
        for i in range(len(self)):
            yield LabeledInstance(self.X[i], int(self.y[i]), None if self.meta is None else self.meta[i])

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        meta = None if self.meta is None else tuple(self.meta[i] for i in rows)
        return Dataset(self.X[rows], self.y[rows], self.schema, meta)

    def columns(self, indices: Sequence[int]) -> "Dataset":
        indices = list(indices)
        schema = tuple(self.schema[i] for i in indices)
        return Dataset(self.X[:, indices], self.y, schema, self.meta)

    def concat(self, other: "Dataset") -> "Dataset":
        if other.schema != self.schema:
            raise SchemaError("cannot concatenate datasets with different schemas")
        meta = None
        if self.meta is not None and other.meta is not None:
            meta = self.meta + other.meta
        return Dataset(np.vstack([self.X, other.X]), np.concatenate([self.y, other.y]), self.schema, meta)

    @property
    def labels_present(self) -> set:
        return set(np.unique(self.y).tolist())


# --------------------------------------------------------------------------
# CSV


def _open_text(target, mode):
    if isinstance(target, (str, Path)):
        return open(target, mode, newline="", encoding="utf-8")
    return None


def save_csv(ds: Dataset, destination) -> None:
    """Header = schema names + ``label``. Floats use repr, which round-trips exactly."""
    fh = _open_text(destination, "w")
    out = fh if fh is not None else destination
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow([*ds.schema, LABEL_COLUMN])
        for row, label in zip(ds.X.tolist(), ds.y.tolist()):
            writer.writerow([*map(repr, row), LABEL_NAMES[label]])
    finally:
        if fh is not None:
            fh.close()


def load_csv(source, schema: Sequence[str] | None = FEATURE_NAMES) -> Dataset:
    """Load a dataset CSV. Pass ``schema=None`` to accept any feature header."""
    fh = _open_text(source, "r")
    src = fh if fh is not None else source
    try:
        reader = csv.reader(src)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty CSV: no header row") from None
        if not header or header[-1] != LABEL_COLUMN:
            raise SchemaError(f"last header column must be {LABEL_COLUMN!r}")
        names = header[:-1]
        if schema is not None:
            expected = list(schema)
            if names != expected:
                missing = [n for n in expected if n not in names]
                extra = [n for n in names if n not in expected]
                parts = []
                if missing:
                    parts.append(f"missing columns {missing}")
                if extra:
                    parts.append(f"unexpected columns {extra}")
                if not parts:
                    parts.append("columns out of order")
                raise SchemaError("header does not match schema: " + "; ".join(parts))
        width = len(header)
        rows, labels = [], []
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != width:
                raise CsvParseError(f"row {lineno}: expected {width} cells, got {len(record)}")
            try:
                rows.append([float(c) for c in record[:-1]])
            except ValueError:
                col = next(i for i, c in enumerate(record[:-1]) if not _is_float(c))
                raise CsvParseError(
                    f"row {lineno}, column {col + 1} ({names[col]}): non-numeric value {record[col]!r}"
                ) from None
            try:
                labels.append(LABEL_VALUES[record[-1].strip()])
            except KeyError:
                raise CsvParseError(f"row {lineno}, column {width} (label): unknown label {record[-1]!r}") from None
    finally:
        if fh is not None:
            fh.close()
    if not rows:
        return Dataset.empty(names)
    return Dataset(np.array(rows, dtype=np.float64), np.array(labels), tuple(names))


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def dumps_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    save_csv(ds, buf)
    return buf.getvalue()


# --------------------------------------------------------------------------
# folds


def make_folds(n_instances: int, k: int, seed: int, labels: Sequence[int] | None = None) -> np.ndarray:
    """Assign each instance a fold id in ``range(k)``.

    Each class is shuffled, the classes are concatenated and folds are dealt
    round-robin, so fold sizes and per-class fold counts differ by at most one.
    """
    if k < 2:
        raise ArgumentError(f"k must be at least 2, got {k}")
    if k > n_instances:
        raise ArgumentError(f"k={k} exceeds the number of instances ({n_instances})")
    rng = np.random.default_rng(seed)
    if labels is None:
        groups = [np.arange(n_instances)]
    else:
        labels = np.asarray(labels)
        if labels.shape[0] != n_instances:
            raise ArgumentError("labels length does not match n_instances")
        groups = [np.flatnonzero(labels == c) for c in np.unique(labels)]
    order = np.concatenate([rng.permutation(g) for g in groups])
    folds = np.empty(n_instances, dtype=np.int64)
    folds[order] = np.arange(n_instances) % k
    return folds


# --------------------------------------------------------------------------
# scaling


@dataclass(frozen=True, eq=False)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        safe = np.where(self.std > 0, self.std, 1.0)
        return np.where(self.std > 0, (X - self.mean) / safe, 0.0)

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))


def fit_scaler(ds: Dataset | np.ndarray) -> Scaler:
    X = ds.X if isinstance(ds, Dataset) else np.asarray(ds, dtype=np.float64)
    if X.shape[0] == 0:
        return Scaler(np.zeros(X.shape[1]), np.zeros(X.shape[1]))
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    # Numerically constant columns must map to exactly zero.
    std = np.where(np.ptp(X, axis=0) == 0, 0.0, std)
    return Scaler(mean, std)


def apply_scaler(sc: Scaler, ds: Dataset) -> Dataset:
    return Dataset(sc.transform(ds.X), ds.y, ds.schema, ds.meta)
