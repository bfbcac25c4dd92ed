"""Classifiers for the extracted feature vectors.

Five learners are provided, all deterministic:

  * ``knn1`` / ``knn5``: k-nearest neighbours on min-max normalized features,
  * ``logistic``: ridge-penalized logistic regression by gradient descent,
  * ``oner``: single-attribute rule over discretized numeric buckets,
  * ``tree``: gain-ratio decision tree with binary numeric splits.

Class codes are 0 (non-seizure) and 1 (seizure). Trained models are
immutable pydantic records and serialize to versioned JSON.
"""
import json
import logging
from enum import Enum
from pathlib import Path
from typing import Annotated, Any, Literal, Mapping, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, field_validator
from pydantic import model_validator

from .errors import ConfigError, DataError, ResourceLimitError
from .evaluation import ConfusionMatrix
from .util.string import comma_and

_logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


class ClassifierKind(str, Enum):
    knn1     = "knn1"
    knn5     = "knn5"
    logistic = "logistic"
    oner     = "oner"
    tree     = "tree"


DEFAULT_HYPERPARAMS = {
    ClassifierKind.knn1:     {"k": 1},
    ClassifierKind.knn5:     {"k": 5},
    ClassifierKind.logistic: {"ridge": 1e-8, "tol": 1e-8, "max_iter": 10000,
                              "memory_cap_mb": 512.0},
    ClassifierKind.oner:     {"min_bucket": 6},
    ClassifierKind.tree:     {"min_leaf": 2},
}


class Dataset(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    rows:          np.ndarray
    labels:        np.ndarray
    feature_names: Tuple[str, ...] = ()

    @field_validator("rows")
    @classmethod
    def _rows(cls, v):
        v = np.atleast_2d(np.asarray(v, dtype=float))
        if v.ndim != 2:
            raise ValueError("rows must form a 2-D array")
        if not np.all(np.isfinite(v)):
            raise ValueError("rows have non-finite values")
        return v

    @field_validator("labels")
    @classmethod
    def _labels(cls, v):
        v = np.asarray(v).ravel().astype(int)
        if not np.all((v == 0) | (v == 1)):
            raise ValueError("labels must be 0 or 1")
        return v

    @model_validator(mode="after")
    def _check(self):
        if self.rows.shape[0] != self.labels.shape[0]:
            raise ValueError("{} rows but {} labels".format(self.rows.shape[0], self.labels.shape[0]))
        if self.feature_names and len(self.feature_names) != self.rows.shape[1]:
            raise ValueError("{} feature names for {} columns".format(
                len(self.feature_names), self.rows.shape[1]))
        return self

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]

    def __len__(self):
        return self.rows.shape[0]


# ---- models ----

class KnnModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind:       Literal["knn"] = "knn"
    k:          int = Field(ge=1)
    n_features: int
    minimum:    Tuple[float, ...]
    maximum:    Tuple[float, ...]
    rows:       Tuple[Tuple[float, ...], ...]
    labels:     Tuple[int, ...]


class LogisticModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind:       Literal["logistic"] = "logistic"
    n_features: int
    mean:       Tuple[float, ...]
    scale:      Tuple[float, ...]
    weights:    Tuple[float, ...]
    intercept:  float
    iterations: int

    @field_validator("weights")
    @classmethod
    def _finite(cls, v):
        if not np.all(np.isfinite(v)):
            raise ValueError("logistic weights must be finite")
        return v


class OneRModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind:            Literal["oner"] = "oner"
    n_features:      int
    attribute:       int
    thresholds:      Tuple[float, ...]
    classes:         Tuple[int, ...]
    training_errors: int


class TreeNode(BaseModel):
    """Leaf when ``feature`` is None; otherwise ``x[feature] <= threshold`` goes left."""
    model_config = ConfigDict(frozen=True)

    label:     int
    n:         int = 0
    feature:   Optional[int] = None
    threshold: Optional[float] = None
    left:      Optional["TreeNode"] = None
    right:     Optional["TreeNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


TreeNode.model_rebuild()


class TreeModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind:       Literal["tree"] = "tree"
    n_features: int
    root:       TreeNode


TrainedModel = Annotated[Union[KnnModel, LogisticModel, OneRModel, TreeModel],
                         Field(discriminator="kind")]
_model_adapter = TypeAdapter(TrainedModel)


# ---- training ----

def _hyperparams(kind : ClassifierKind, given : Optional[Mapping[str, Any]]) -> dict:
    params = dict(DEFAULT_HYPERPARAMS[kind])
    unknown = sorted(set(given or {}) - set(params))
    if unknown:
        raise ConfigError("unknown {} hyperparameters: {}".format(kind.value, comma_and(unknown)))
    params.update(given or {})
    return params


def _min_max(rows):
    lo = rows.min(axis=0)
    hi = rows.max(axis=0)
    return lo, hi


def _normalize(rows, lo, hi):
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.clip((rows - lo) / safe, 0.0, 1.0)
    out[..., span <= 0] = 0.0
    return out


def _train_knn(data : Dataset, k : int) -> KnnModel:
    lo, hi = _min_max(data.rows)
    return KnnModel(k=k, n_features=data.n_features, minimum=tuple(lo), maximum=tuple(hi),
                    rows=tuple(map(tuple, data.rows)), labels=tuple(int(v) for v in data.labels))


def _logistic_loss(w, b, X, y, ridge):
    z = X @ w + b
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * ridge * (w @ w)
    residual = 0.5 * (1.0 + np.tanh(0.5 * z)) - y  # sigmoid(z) - y
    grad_w = X.T @ residual / len(y) + ridge * w
    grad_b = float(np.mean(residual))
    return loss, grad_w, grad_b


def _train_logistic(data : Dataset, ridge : float, tol : float, max_iter : int,
                    memory_cap_mb : float) -> LogisticModel:
    working_set = data.rows.size * 8 * 4 / 2 ** 20
    if working_set > memory_cap_mb:
        raise ResourceLimitError(
            "logistic regression on {}x{} rows needs ~{:.1f} MB, above the {:.1f} MB cap".format(
                data.rows.shape[0], data.rows.shape[1], working_set, memory_cap_mb))

    mean = data.rows.mean(axis=0)
    scale = data.rows.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    X = (data.rows - mean) / scale
    y = data.labels.astype(float)

    w = np.zeros(X.shape[1])
    b = 0.0
    loss, gw, gb = _logistic_loss(w, b, X, y, ridge)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        gnorm2 = gw @ gw + gb * gb
        if np.sqrt(gnorm2) <= tol:
            break
        step = 1.0
        while True:
            w_new, b_new = w - step * gw, b - step * gb
            new_loss, new_gw, new_gb = _logistic_loss(w_new, b_new, X, y, ridge)
            if new_loss <= loss - 0.5 * step * gnorm2 or step < 1e-20:
                break
            step *= 0.5
        if step < 1e-20:
            break
        w, b, loss, gw, gb = w_new, b_new, new_loss, new_gw, new_gb
    _logger.debug("logistic stopped after %d iterations, |grad|=%.3g", iterations,
                  np.sqrt(gw @ gw + gb * gb))
    return LogisticModel(n_features=data.n_features, mean=tuple(mean), scale=tuple(scale),
                         weights=tuple(w), intercept=float(b), iterations=iterations)


def _majority(counts) -> int:
    # ties go to class 0
    return int(np.argmax(counts))


def _oner_buckets(values, labels, min_bucket):
    """Discretize one attribute; returns (thresholds, classes, errors)."""
    order = np.argsort(values, kind="stable")
    v, c = values[order], labels[order]
    n = v.size
    buckets = []  # (last position exclusive, counts)
    counts = np.zeros(2, dtype=int)
    for i in range(n):
        counts[c[i]] += 1
        if i + 1 == n:
            break
        major = _majority(counts)
        if (counts[major] >= min_bucket and v[i + 1] != v[i] and c[i + 1] != major):
            buckets.append((i + 1, counts.copy()))
            counts = np.zeros(2, dtype=int)
    buckets.append((n, counts.copy()))

    # merge neighbours predicting the same class
    merged = []
    for end, cnt in buckets:
        if merged and _majority(merged[-1][1]) == _majority(cnt):
            merged[-1] = (end, merged[-1][1] + cnt)
        else:
            merged.append((end, cnt))

    thresholds = [(v[end - 1] + v[end]) / 2.0 for end, _ in merged[:-1]]
    classes = [_majority(cnt) for _, cnt in merged]
    errors = int(sum(cnt.sum() - cnt.max() for _, cnt in merged))
    return thresholds, classes, errors


def _train_oner(data : Dataset, min_bucket : int) -> OneRModel:
    best = None
    for j in range(data.n_features):
        thresholds, classes, errors = _oner_buckets(data.rows[:, j], data.labels, min_bucket)
        if best is None or errors < best[3]:
            best = (j, thresholds, classes, errors)
    j, thresholds, classes, errors = best
    return OneRModel(n_features=data.n_features, attribute=j, thresholds=tuple(thresholds),
                     classes=tuple(classes), training_errors=errors)


def _entropy(counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    total = counts.sum(axis=-1, keepdims=True)
    p = np.divide(counts, total, out=np.zeros_like(counts), where=total > 0)
    logs = np.log2(p, out=np.zeros_like(p), where=p > 0)
    return -(p * logs).sum(axis=-1)


def _best_split(X, y, min_leaf):
    """(feature, threshold) by gain ratio among splits of at least average gain."""
    n = y.size
    parent = _entropy(np.bincount(y, minlength=2))
    candidates = []  # (gain, ratio, feature, threshold)
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        v, c = X[order, j], y[order]
        ones = np.cumsum(c)
        pos = np.arange(1, n)  # size of the left part
        ok = (v[1:] != v[:-1]) & (pos >= min_leaf) & (n - pos >= min_leaf)
        if not ok.any():
            continue
        pos = pos[ok]
        left_ones = ones[pos - 1]
        right_ones = ones[-1] - left_ones
        left = np.stack([pos - left_ones, left_ones], axis=1)
        right = np.stack([(n - pos) - right_ones, right_ones], axis=1)
        wl = pos / n
        gain = parent - wl * _entropy(left) - (1 - wl) * _entropy(right)
        split_info = _entropy(np.stack([pos, n - pos], axis=1))
        ratio = gain / split_info
        thresholds = (v[pos - 1] + v[pos]) / 2.0
        for g, r, t in zip(gain, ratio, thresholds):
            candidates.append((float(g), float(r), j, float(t)))
    candidates = [cand for cand in candidates if cand[0] > 1e-12]
    if not candidates:
        return None
    average = np.mean([cand[0] for cand in candidates])
    eligible = [cand for cand in candidates if cand[0] >= average - 1e-12]
    # stable max: first feature, then first threshold, wins ties
    best = max(eligible, key=lambda cand: cand[1])
    return best[2], best[3]


def _grow(X, y, min_leaf) -> TreeNode:
    counts = np.bincount(y, minlength=2)
    label = _majority(counts)
    if counts.min() == 0 or y.size < 2 * min_leaf:
        return TreeNode(label=label, n=int(y.size))
    split = _best_split(X, y, min_leaf)
    if split is None:
        return TreeNode(label=label, n=int(y.size))
    j, t = split
    go_left = X[:, j] <= t
    return TreeNode(label=label, n=int(y.size), feature=j, threshold=t,
                    left=_grow(X[go_left], y[go_left], min_leaf),
                    right=_grow(X[~go_left], y[~go_left], min_leaf))


def train(kind, data : Dataset, hyperparams : Optional[Mapping[str, Any]] = None):
    """Fit a classifier of ``kind`` on ``data``.

    Raises:
        DataError: empty training set or only one class present.
        ConfigError: unknown hyperparameter.
        ResourceLimitError: logistic working set above its memory cap.
    """
    try:
        kind = ClassifierKind(kind)
    except ValueError:
        raise ConfigError("unknown classifier '{}'; choose from {}".format(
            kind, comma_and(k.value for k in ClassifierKind)))
    if len(data) == 0:
        raise DataError("empty training set")
    if np.unique(data.labels).size < 2:
        raise DataError("training set has a single class")
    params = _hyperparams(kind, hyperparams)

    if kind in (ClassifierKind.knn1, ClassifierKind.knn5):
        return _train_knn(data, int(params["k"]))
    if kind == ClassifierKind.logistic:
        return _train_logistic(data, float(params["ridge"]), float(params["tol"]),
                               int(params["max_iter"]), float(params["memory_cap_mb"]))
    if kind == ClassifierKind.oner:
        return _train_oner(data, int(params["min_bucket"]))
    return TreeModel(n_features=data.n_features,
                     root=_grow(data.rows, data.labels, int(params["min_leaf"])))


# ---- prediction ----

def _predict_knn(model : KnnModel, rows):
    lo, hi = np.array(model.minimum), np.array(model.maximum)
    train_rows = _normalize(np.array(model.rows), lo, hi)
    labels = np.array(model.labels)
    out = np.empty(rows.shape[0], dtype=int)
    for i, row in enumerate(_normalize(rows, lo, hi)):
        dist = ((train_rows - row) ** 2).sum(axis=1)
        nearest = np.argsort(dist, kind="stable")[:model.k]
        votes = np.bincount(labels[nearest], minlength=2)
        out[i] = labels[nearest[0]] if votes[0] == votes[1] else int(np.argmax(votes))
    return out


def _predict_logistic(model : LogisticModel, rows):
    X = (rows - np.array(model.mean)) / np.array(model.scale)
    z = X @ np.array(model.weights) + model.intercept
    return (z > 0).astype(int)


def _predict_oner(model : OneRModel, rows):
    bucket = np.searchsorted(np.array(model.thresholds), rows[:, model.attribute], side="left")
    return np.array(model.classes, dtype=int)[bucket]


def _predict_tree(model : TreeModel, rows):
    out = np.empty(rows.shape[0], dtype=int)
    for i, row in enumerate(rows):
        node = model.root
        while not node.is_leaf:
            node = node.left if row[node.feature] <= node.threshold else node.right
        out[i] = node.label
    return out


_PREDICTORS = {
    "knn":      _predict_knn,
    "logistic": _predict_logistic,
    "oner":     _predict_oner,
    "tree":     _predict_tree,
}


def predict_many(model, rows) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[1] != model.n_features:
        raise DataError("row has {} features, model was trained on {}".format(
            rows.shape[1], model.n_features))
    return _PREDICTORS[model.kind](model, rows)


def predict(model, row) -> int:
    """Class code (0 or 1) of a single feature vector."""
    row = np.asarray(row, dtype=float)
    if row.ndim != 1:
        raise DataError("predict takes one feature vector, got shape {}".format(row.shape))
    return int(predict_many(model, row[None, :])[0])


def evaluate(model, test : Dataset) -> ConfusionMatrix:
    if len(test) == 0:
        raise DataError("empty test set")
    return ConfusionMatrix.from_predictions(test.labels, predict_many(model, test.rows))


# ---- persistence ----

def dump_model(model) -> str:
    payload = {"format_version": MODEL_FORMAT_VERSION,
               "model": _model_adapter.dump_python(model, mode="json")}
    return json.dumps(payload, indent=1, sort_keys=True) + "\n"


def parse_model(text : str):
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as err:
        raise DataError("model file is not JSON: {}".format(err))
    version = payload.get("format_version") if isinstance(payload, dict) else None
    if version != MODEL_FORMAT_VERSION:
        raise DataError("unsupported model format version {}".format(version))
    try:
        return _model_adapter.validate_python(payload["model"])
    except (KeyError, ValidationError) as err:
        raise DataError("invalid model file: {}".format(err))


def save_model(model, path) -> Path:
    path = Path(path)
    path.write_text(dump_model(model))
    return path


def load_model(path):
    return parse_model(Path(path).read_text())
