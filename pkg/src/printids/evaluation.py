"""Confusion-matrix metrics, ROC AUC and k-fold cross-validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import BENIGN, MALICIOUS, Dataset, make_folds
from .errors import ArgumentError, TrainingError
from .learners import KINDS, TrainedModel, train

DISPLAY_NAMES = {
    "decision_tree_c45": "Decision Tree C4.5",
    "naive_bayes": "Naive Bayes",
    "kmeans": "K-Means",
    "linear_svm": "SVM (linear)",
}


@dataclass(frozen=True)
class ConfusionMatrix:
    """Positive class is malicious."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "ConfusionMatrix":
        y_true = np.asarray(y_true)
        y_pred = np.asarray(y_pred)
        mal, pmal = y_true == MALICIOUS, y_pred == MALICIOUS
        return cls(
            tp=int((mal & pmal).sum()),
            fp=int((~mal & pmal).sum()),
            tn=int((~mal & ~pmal).sum()),
            fn=int((mal & ~pmal).sum()),
        )

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


def metrics(cm: ConfusionMatrix) -> tuple[float, float, float]:
    """Return (fpr, tpr, accuracy). A zero denominator gives a rate of 0."""
    if cm.total <= 0:
        raise ArgumentError("confusion matrix is empty")
    fpr = cm.fp / (cm.fp + cm.tn) if cm.fp + cm.tn else 0.0
    tpr = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
    return fpr, tpr, (cm.tp + cm.tn) / cm.total


def roc_auc(scores, labels) -> float:
    """Mann-Whitney estimate of AUC with ties counted as one half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    pos = y == MALICIOUS
    n_pos = int(pos.sum())
    n_neg = y.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ArgumentError("AUC is undefined unless both labels are present")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    # average 1-based ranks over runs of equal scores
    starts = np.flatnonzero(np.r_[True, sorted_s[1:] != sorted_s[:-1]])
    ends = np.r_[starts[1:], sorted_s.size]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty_like(s)
    ranks[order] = np.repeat(avg, ends - starts)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class AlgorithmResult:
    kind: str
    confusion: ConfusionMatrix
    auc: float
    fold_seconds: list = field(default_factory=list)

    @property
    def fpr(self) -> float:
        return metrics(self.confusion)[0]

    @property
    def tpr(self) -> float:
        return metrics(self.confusion)[1]

    @property
    def accuracy(self) -> float:
        return metrics(self.confusion)[2]

    @property
    def mean_training_seconds(self) -> float:
        return float(np.mean(self.fold_seconds)) if self.fold_seconds else 0.0

    def to_dict(self, include_timing: bool = False) -> dict:
        cm = self.confusion
        out = {
            "kind": self.kind,
            "fpr": self.fpr,
            "tpr": self.tpr,
            "auc": self.auc,
            "accuracy": self.accuracy,
            "confusion": {"tp": cm.tp, "fp": cm.fp, "tn": cm.tn, "fn": cm.fn},
        }
        if include_timing:
            out["mean_training_seconds"] = self.mean_training_seconds
            out["fold_training_seconds"] = list(self.fold_seconds)
        return out


@dataclass
class EvalReport:
    results: dict
    k: int
    seed: int
    n_instances: int
    features: tuple
    models: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, kind: str) -> AlgorithmResult:
        return self.results[kind]

    def to_dict(self, include_timing: bool = False) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "n_instances": self.n_instances,
            "features": list(self.features),
            "algorithms": [r.to_dict(include_timing) for r in self.results.values()],
        }

    def to_json(self, include_timing: bool = False) -> str:
        """Machine-readable report. Wall-clock timing is opt-in because it
        varies between runs."""
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True) + "\n"

    def format_table(self, include_timing: bool = True) -> str:
        head = ["Algorithm", "FPR", "TPR", "AUC", "Accuracy"]
        if include_timing:
            head.append("Train time (s)")
        rows = []
        for r in self.results.values():
            row = [DISPLAY_NAMES.get(r.kind, r.kind), f"{r.fpr:.3f}", f"{r.tpr:.3f}", f"{r.auc:.3f}",
                   f"{100 * r.accuracy:.2f}%"]
            if include_timing:
                row.append(f"{r.mean_training_seconds:.2f}")
            rows.append(row)
        widths = [max(len(x) for x in col) for col in zip(head, *rows)]
        line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
        title = f"{self.k}-fold cross-validation, {self.n_instances} instances, {len(self.features)} features, seed {self.seed}"
        return "\n".join([title, line(head), line(["-" * w for w in widths]), *map(line, rows)]) + "\n"


def cross_validate(
    ds: Dataset,
    kinds: Sequence[str] = KINDS,
    k: int = 5,
    seed: int = 0,
    feature_subset: Sequence[int] | None = None,
    hyperparams: dict | None = None,
    keep_models: bool = False,
) -> EvalReport:
    """Stratified k-fold CV. Scaling, where a learner needs it, is fitted
    inside ``train`` on the training folds only."""
    for kind in kinds:
        if kind not in KINDS:
            raise ArgumentError(f"unknown learner kind {kind!r}")
    if not {BENIGN, MALICIOUS} <= ds.labels_present:
        raise ArgumentError("cross-validation needs both labels present")
    if feature_subset is not None:
        ds = ds.columns(feature_subset)
    folds = make_folds(len(ds), k, seed, ds.y)
    results = {}
    models: dict = {}
    for kind in kinds:
        cm = ConfusionMatrix()
        scores = np.empty(len(ds))
        seconds = []
        for fold in range(k):
            test = folds == fold
            try:
                model = train(kind, ds.subset(~test), (hyperparams or {}).get(kind), seed)
            except TrainingError as exc:
                raise TrainingError(f"{kind}, fold {fold}: {exc}") from exc
            labels, fold_scores = model.predict_many(ds.X[test])
            scores[test] = fold_scores
            cm = cm + ConfusionMatrix.from_predictions(ds.y[test], labels)
            seconds.append(model.training_seconds)
            if keep_models:
                models.setdefault(kind, []).append(model)
        results[kind] = AlgorithmResult(kind, cm, roc_auc(scores, ds.y), seconds)
    return EvalReport(results, k, seed, len(ds), ds.schema, models)
