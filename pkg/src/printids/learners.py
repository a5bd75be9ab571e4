"""Four classifiers behind one train/predict contract.

Every model produces a label and a malicious score. Ties go to malicious:
an IDS should err toward alerting.

    decision_tree_c45  binary numeric splits chosen by gain ratio
    naive_bayes        Gaussian, per-class per-feature
    kmeans             2-means on standardized features, clusters labeled by majority
    linear_svm         Pegasos primal subgradient on standardized features
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .dataset import BENIGN, MALICIOUS, Dataset, Scaler, fit_scaler
from .errors import ArgumentError, ContractError, ModelFormatError, TrainingError

KINDS = ("decision_tree_c45", "naive_bayes", "kmeans", "linear_svm")
SCALED_KINDS = frozenset({"kmeans", "linear_svm"})
MODEL_FORMAT = "printids-model"
MODEL_VERSION = 1

DEFAULT_HYPERPARAMS = {
    "decision_tree_c45": {"min_leaf": 2, "gain_floor": 1e-6},
    "naive_bayes": {"var_floor": 1e-9},
    "kmeans": {"k": 2, "tol": 1e-6, "max_iter": 100},
    "linear_svm": {"lam": 1e-4, "epochs": 20, "project": True},
}

# Score at or above which the label is malicious.
DECISION_POINT = {"decision_tree_c45": 0.5, "naive_bayes": 0.5, "kmeans": 0.5, "linear_svm": 0.0}


@dataclass(frozen=True, eq=False)
class TrainedModel:
    kind: str
    schema: tuple
    params: dict
    scaler: Scaler | None = None
    hyperparams: dict = field(default_factory=dict)
    seed: int = 0
    training_seconds: float = 0.0

    @property
    def decision_point(self) -> float:
        return DECISION_POINT[self.kind]

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.schema):
            raise ContractError(
                f"feature vector has {X.shape[1]} entries, model schema has {len(self.schema)}"
            )
        if self.scaler is not None:
            X = self.scaler.transform(X)
        return _SCORERS[self.kind](self.params, X)

    def predict_many(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = self.scores(X)
        return np.where(s >= self.decision_point, MALICIOUS, BENIGN), s


def predict(model: TrainedModel, fv) -> tuple[int, float]:
    labels, scores = model.predict_many(np.asarray(fv, dtype=np.float64).reshape(1, -1))
    return int(labels[0]), float(scores[0])


def train(kind: str, ds: Dataset, hyperparams: dict | None = None, seed: int = 0) -> TrainedModel:
    if kind not in KINDS:
        raise ArgumentError(f"unknown learner kind {kind!r}; choose from {', '.join(KINDS)}")
    if len(ds) == 0:
        raise TrainingError("cannot train on an empty dataset")
    if np.any((ds.y != BENIGN) & (ds.y != MALICIOUS)):
        raise TrainingError("training data contains unlabeled instances")
    hp = dict(DEFAULT_HYPERPARAMS[kind])
    if hyperparams:
        unknown = set(hyperparams) - set(hp)
        if unknown:
            raise ArgumentError(f"unknown hyperparameters for {kind}: {sorted(unknown)}")
        hp.update(hyperparams)
    start = time.perf_counter()
    scaler = fit_scaler(ds) if kind in SCALED_KINDS else None
    X = ds.X if scaler is None else scaler.transform(ds.X)
    params = _FITTERS[kind](X, ds.y, hp, seed)
    elapsed = time.perf_counter() - start
    return TrainedModel(kind, ds.schema, params, scaler, hp, seed, elapsed)


# --------------------------------------------------------------------------
# decision tree


def _binary_entropy(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        q = 1.0 - p
        h = -(np.where(p > 0, p * np.log2(p), 0.0) + np.where(q > 0, q * np.log2(q), 0.0))
    return h


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int, gain_floor: float):
    """Return (feature, threshold) maximizing gain ratio, or None."""
    n, d = X.shape
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    cum = np.cumsum(y[order], axis=0)
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    mal_left = cum[:-1]
    mal_total = cum[-1]
    valid = (xs[:-1] != xs[1:]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    if not valid.any():
        return None
    h_parent = float(_binary_entropy(np.array(mal_total[0] / n)))
    h_left = _binary_entropy(mal_left / n_left)
    h_right = _binary_entropy((mal_total - mal_left) / n_right)
    gain = h_parent - (n_left * h_left + n_right * h_right) / n
    gain = np.where(gain < 0, 0.0, gain)
    split_info = _binary_entropy(n_left / n)
    ok = valid & (gain >= gain_floor)
    if not ok.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(ok, gain / split_info, -np.inf)
    # feature-major flattening: ties resolve to the lowest feature, then lowest threshold
    flat = int(np.argmax(ratio.T))
    f, i = divmod(flat, n - 1)
    lo, hi = xs[i, f], xs[i + 1, f]
    t = lo + (hi - lo) / 2
    if not lo <= t < hi:
        t = lo
    return f, float(t)


def _fit_tree(X, y, hp, seed):
    min_leaf = int(hp["min_leaf"])
    gain_floor = float(hp["gain_floor"])
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        mal = int(y[idx].sum())
        counts.append([len(idx) - mal, mal])
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)))]
    while stack:
        node, idx = stack.pop()
        ben, mal = counts[node]
        if ben == 0 or mal == 0 or len(idx) < 2 * min_leaf:
            continue
        split = _best_split(X[idx], y[idx], min_leaf, gain_floor)
        if split is None:
            continue
        f, t = split
        go_left = X[idx, f] <= t
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, t
        left[node], right[node] = new_node(li), new_node(ri)
        stack.append((right[node], ri))
        stack.append((left[node], li))
    return {
        "feature": np.array(feature, dtype=np.int64),
        "threshold": np.array(threshold, dtype=np.float64),
        "left": np.array(left, dtype=np.int64),
        "right": np.array(right, dtype=np.int64),
        "counts": np.array(counts, dtype=np.int64).reshape(-1, 2),
    }


def _tree_leaves(params, X):
    feature, threshold = params["feature"], params["threshold"]
    left, right = params["left"], params["right"]
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    while True:
        f = feature[node]
        inner = f >= 0
        if not inner.any():
            return node
        r, n = rows[inner], node[inner]
        go_left = X[r, f[inner]] <= threshold[n]
        node[inner] = np.where(go_left, left[n], right[n])


def _score_tree(params, X):
    counts = params["counts"][_tree_leaves(params, X)]
    return counts[:, 1] / counts.sum(axis=1)


def tree_depth(model: TrainedModel) -> int:
    left, right = model.params["left"], model.params["right"]
    depth, stack = 0, [(0, 0)]
    while stack:
        node, dep = stack.pop()
        depth = max(depth, dep)
        if left[node] >= 0:
            stack += [(left[node], dep + 1), (right[node], dep + 1)]
    return depth


def tree_features(model: TrainedModel) -> list[str]:
    """Schema names the tree actually tests, in first-use (preorder) order."""
    used = []
    for f in model.params["feature"]:
        if f >= 0 and model.schema[f] not in used:
            used.append(model.schema[f])
    return used


def format_tree(model: TrainedModel, max_depth: int = 20) -> str:
    p = model.params
    lines = []

    def walk(node, indent):
        if p["feature"][node] < 0:
            ben, mal = p["counts"][node]
            lines.append(f"{indent}-> {'malicious' if mal >= ben else 'benign'} ({ben}/{mal})")
            return
        if len(indent) // 2 >= max_depth:
            lines.append(f"{indent}...")
            return
        name, t = model.schema[p["feature"][node]], p["threshold"][node]
        lines.append(f"{indent}{name} <= {t:.6g}")
        walk(p["left"][node], indent + "  ")
        lines.append(f"{indent}{name} > {t:.6g}")
        walk(p["right"][node], indent + "  ")

    walk(0, "")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# Gaussian naive Bayes


def _fit_nb(X, y, hp, seed):
    d = X.shape[1]
    means = np.zeros((2, d))
    variances = np.ones((2, d))
    priors = np.zeros(2)
    for c in (BENIGN, MALICIOUS):
        Xc = X[y == c]
        priors[c] = Xc.shape[0] / X.shape[0]
        if Xc.shape[0]:
            means[c] = Xc.mean(axis=0)
            variances[c] = Xc.var(axis=0)
    variances = np.maximum(variances, float(hp["var_floor"]))
    return {"means": means, "variances": variances, "priors": priors}


def _score_nb(params, X):
    means, variances, priors = params["means"], params["variances"], params["priors"]
    if priors[MALICIOUS] == 0:
        return np.zeros(X.shape[0])
    if priors[BENIGN] == 0:
        return np.ones(X.shape[0])
    log_lik = np.empty((X.shape[0], 2))
    for c in (BENIGN, MALICIOUS):
        z = (X - means[c]) ** 2 / variances[c]
        log_lik[:, c] = math.log(priors[c]) - 0.5 * (np.log(2 * np.pi * variances[c]).sum() + z.sum(axis=1))
    diff = log_lik[:, BENIGN] - log_lik[:, MALICIOUS]
    # P(malicious) = 1 / (1 + exp(diff)), evaluated without overflow
    out = np.empty_like(diff)
    pos = diff >= 0
    e = np.exp(-diff[pos])
    out[pos] = e / (1.0 + e)
    out[~pos] = 1.0 / (1.0 + np.exp(diff[~pos]))
    return out


# --------------------------------------------------------------------------
# k-means


def _kmeanspp(X, k, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _assign(X, centers):
    d2 = (X * X).sum(axis=1)[:, None] - 2 * X @ centers.T + (centers * centers).sum(axis=1)[None, :]
    return np.argmin(d2, axis=1)


def _fit_kmeans(X, y, hp, seed):
    k = int(hp["k"])
    if X.shape[0] < k:
        raise TrainingError(f"kmeans needs at least k={k} instances, got {X.shape[0]}")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(X, k, rng)
    for _ in range(int(hp["max_iter"])):
        assign = _assign(X, centers)
        new = centers.copy()
        for j in range(k):
            members = assign == j
            if members.any():
                new[j] = X[members].mean(axis=0)
        shift = np.sqrt(((new - centers) ** 2).sum(axis=1)).max()
        centers = new
        if shift < float(hp["tol"]):
            break
    assign = _assign(X, centers)
    labels = np.empty(k, dtype=np.int64)
    for j in range(k):
        mal = int(y[assign == j].sum())
        ben = int((assign == j).sum()) - mal
        labels[j] = MALICIOUS if mal >= ben else BENIGN
    return {"centroids": centers, "labels": labels}


def _score_kmeans(params, X):
    centers, labels = params["centroids"], params["labels"]
    dist = np.sqrt(np.maximum(
        (X * X).sum(axis=1)[:, None] - 2 * X @ centers.T + (centers * centers).sum(axis=1)[None, :], 0.0
    ))
    # exact distances where the expansion could lose precision near zero
    for j in range(centers.shape[0]):
        near = dist[:, j] < 1e-6
        if near.any():
            dist[near, j] = np.sqrt(((X[near] - centers[j]) ** 2).sum(axis=1))
    if not (labels == MALICIOUS).any():
        return np.zeros(X.shape[0])
    if not (labels == BENIGN).any():
        return np.ones(X.shape[0])
    d_ben = dist[:, labels == BENIGN].min(axis=1)
    d_mal = dist[:, labels == MALICIOUS].min(axis=1)
    total = d_ben + d_mal
    with np.errstate(divide="ignore", invalid="ignore"):
        score = 0.5 + (d_ben - d_mal) / (2 * total)
    return np.where(total > 0, score, 0.5)


# --------------------------------------------------------------------------
# linear SVM (Pegasos)


def _fit_svm(X, y, hp, seed):
    lam = float(hp["lam"])
    epochs = int(hp["epochs"])
    project = bool(hp["project"])
    rng = np.random.default_rng(seed)
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])  # bias as a regularized constant feature
    rows = list(Xa)
    sq = (Xa * Xa).sum(axis=1).tolist()
    target = np.where(y == MALICIOUS, 1.0, -1.0).tolist()
    radius2 = 1.0 / lam
    v = np.zeros(d + 1)
    scale = 1.0  # w = scale * v
    vv = 0.0  # v . v
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n).tolist():
            t += 1
            eta = 1.0 / (lam * t)
            x, yi = rows[i], target[i]
            vx = float(v @ x)
            margin = yi * scale * vx
            shrink = 1.0 - eta * lam
            if shrink <= 0.0:
                v[:] = 0.0
                vv, vx, scale = 0.0, 0.0, 1.0
            else:
                scale *= shrink
            if margin < 1.0:
                a = eta * yi / scale
                v += a * x
                vv += 2 * a * vx + a * a * sq[i]
            if project:
                norm2 = scale * scale * vv
                if norm2 > radius2:
                    scale *= math.sqrt(radius2 / norm2)
            if scale < 1e-100:
                v *= scale
                vv *= scale * scale
                scale = 1.0
    w = scale * v
    return {"weights": w[:-1].copy(), "bias": float(w[-1])}


def _score_svm(params, X):
    return X @ params["weights"] + params["bias"]


_FITTERS = {
    "decision_tree_c45": _fit_tree,
    "naive_bayes": _fit_nb,
    "kmeans": _fit_kmeans,
    "linear_svm": _fit_svm,
}
_SCORERS = {
    "decision_tree_c45": _score_tree,
    "naive_bayes": _score_nb,
    "kmeans": _score_kmeans,
    "linear_svm": _score_svm,
}


# --------------------------------------------------------------------------
# serialization


def _encode(value: Any):
    if isinstance(value, np.ndarray):
        return {"dtype": str(value.dtype), "shape": list(value.shape), "data": value.ravel().tolist()}
    return value


def _decode(value: Any):
    if isinstance(value, dict) and set(value) == {"dtype", "shape", "data"}:
        return np.array(value["data"], dtype=value["dtype"]).reshape(value["shape"])
    return value


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind,
        "schema": list(model.schema),
        "seed": model.seed,
        "hyperparams": model.hyperparams,
        "training_seconds": model.training_seconds,
        "scaler": None if model.scaler is None else model.scaler.to_dict(),
        "params": {k: _encode(v) for k, v in model.params.items()},
    }


def model_from_dict(doc: dict) -> TrainedModel:
    if doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a printids model document")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
    if doc.get("kind") not in KINDS:
        raise ModelFormatError(f"unknown model kind {doc.get('kind')!r}")
    try:
        return TrainedModel(
            kind=doc["kind"],
            schema=tuple(doc["schema"]),
            params={k: _decode(v) for k, v in doc["params"].items()},
            scaler=None if doc["scaler"] is None else Scaler.from_dict(doc["scaler"]),
            hyperparams=doc["hyperparams"],
            seed=doc["seed"],
            training_seconds=doc["training_seconds"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from None


def save_model(model: TrainedModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")


def load_model(path) -> TrainedModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: invalid JSON ({exc})") from None
    return model_from_dict(doc)
