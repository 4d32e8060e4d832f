"""Random Forest classifier (Gini, bootstrap, mtry) with CV, ACC and AUC.

Trees are stored flat: one set of node arrays for the whole forest, with
``roots[t]`` the root of tree ``t``. A leaf has ``feature == -1``; its
``value`` is the weighted positive fraction and ``counts`` holds the
(negative, positive) bootstrap-weighted class histogram.
"""

from __future__ import annotations

import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import BinaryIO, Sequence

import numpy as np
from scipy.stats import rankdata

from . import _kernels
from .errors import DataError
from .features import FeatureVector

DEFAULT_N_TREES = 100
MODEL_MAGIC = b"MXRF"
MODEL_VERSION = 1


@dataclass(frozen=True, eq=False)
class ForestModel:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    counts: np.ndarray
    roots: np.ndarray
    n_features: int
    seed: int
    feature_names: tuple = ()
    target: str | None = None
    class_prior: float = 0.0
    params: dict = field(default_factory=dict)

    @property
    def n_trees(self) -> int:
        return int(self.roots.size)

    def tree_sizes(self) -> np.ndarray:
        return np.diff(np.append(self.roots, self.feature.size))


@dataclass
class EvalReport:
    acc: float
    auc: float
    per_fold: list = field(default_factory=list)
    n: int = 0
    positive_fraction: float = float("nan")

    def as_dict(self) -> dict:
        return {
            "acc": self.acc,
            "auc": self.auc,
            "n": self.n,
            "positive_fraction": self.positive_fraction,
            "per_fold": [{"acc": a, "auc": u} for a, u in self.per_fold],
        }


def as_matrix(features) -> np.ndarray:
    if len(features) and isinstance(features[0], FeatureVector):
        X = np.vstack([f.values for f in features])
    else:
        X = np.asarray(features, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
    return np.ascontiguousarray(X, dtype=np.float64)


def _grow_tree(X, y, rng, mtry, max_depth):
    n, p = X.shape
    boot = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
    rows = np.flatnonzero(boot > 0).astype(np.intp)

    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        wpos = float(np.sum(y[idx] * boot[idx]))
        wtot = float(np.sum(boot[idx]))
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append((wtot - wpos, wpos))
        return len(feature) - 1

    stack = [(new_node(rows), rows, 0)]
    while stack:
        node, idx, depth = stack.pop()
        neg, pos = counts[node]
        if neg == 0.0 or pos == 0.0 or idx.size < 2:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        order = rng.permutation(p).astype(np.intp)
        f, t, _ = _kernels.best_split(X, y, boot, idx, order, mtry)
        if f < 0:
            continue
        go_left = X[idx, f] <= t
        li, ri = idx[go_left], idx[~go_left]
        feature[node] = f
        threshold[node] = t
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    counts = np.asarray(counts, dtype=np.float64)
    return (
        np.asarray(feature, dtype=np.intp),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.intp),
        np.asarray(right, dtype=np.intp),
        counts,
    )


def train_forest(
    features,
    labels: Sequence[bool],
    n_trees: int = DEFAULT_N_TREES,
    max_depth: int | None = None,
    min_leaf: int = 1,
    mtry: int | None = None,
    seed: int = 0,
    n_jobs: int = 1,
    feature_names: Sequence[str] | None = None,
    target: str | None = None,
) -> ForestModel:
    """Grow ``n_trees`` Gini trees on bootstrap resamples.

    Tree ``t`` draws from its own stream ``SeedSequence(seed).spawn(n_trees)[t]``,
    so the model does not depend on ``n_jobs``. Split ties go to the lowest
    feature index, then the lowest threshold.
    """
    X = as_matrix(features)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if X.shape[0] == 0:
        raise DataError("cannot train on an empty sample")
    if X.shape[0] != y.size:
        raise DataError(f"{X.shape[0]} feature rows but {y.size} labels")
    if X.shape[0] < 2:
        raise DataError("need at least 2 samples")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature value in training data")
    if not np.all((y == 0) | (y == 1)):
        raise DataError("labels must be boolean")
    if min_leaf != 1:
        raise DataError("only min_leaf=1 is supported")
    if n_trees < 1:
        raise DataError("n_trees must be >= 1")
    p = X.shape[1]
    if mtry is None:
        mtry = max(1, int(math.isqrt(p)))
    streams = np.random.SeedSequence(seed).spawn(n_trees)

    def grow(t):
        return _grow_tree(X, y, np.random.default_rng(streams[t]), mtry, max_depth)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(grow, range(n_trees)))
    else:
        trees = [grow(t) for t in range(n_trees)]

    offsets = np.cumsum([0] + [tr[0].size for tr in trees[:-1]])
    feat = np.concatenate([tr[0] for tr in trees])
    thr = np.concatenate([tr[1] for tr in trees])
    left = np.concatenate([np.where(tr[2] >= 0, tr[2] + off, -1) for tr, off in zip(trees, offsets)])
    right = np.concatenate([np.where(tr[3] >= 0, tr[3] + off, -1) for tr, off in zip(trees, offsets)])
    counts = np.concatenate([tr[4] for tr in trees])
    value = counts[:, 1] / counts.sum(axis=1)
    return ForestModel(
        feature=feat.astype(np.intp),
        threshold=thr,
        left=left.astype(np.intp),
        right=right.astype(np.intp),
        value=value,
        counts=counts,
        roots=offsets.astype(np.intp),
        n_features=p,
        seed=seed,
        feature_names=tuple(feature_names) if feature_names is not None else (),
        target=target,
        class_prior=float(y.mean()),
        params={"n_trees": n_trees, "max_depth": max_depth, "min_leaf": min_leaf, "mtry": mtry},
    )


def predict_proba(model: ForestModel, x) -> np.ndarray | float:
    """Mean over trees of the leaf positive fraction.

    A single vector (or FeatureVector) gives a float; a matrix gives an array.
    """
    single = isinstance(x, FeatureVector) or np.ndim(x) == 1
    X = as_matrix([x] if isinstance(x, FeatureVector) else x)
    if X.shape[1] != model.n_features:
        raise DataError(f"expected {model.n_features} features, got {X.shape[1]}")
    out = _kernels.predict_forest(
        X, model.feature, model.threshold, model.left, model.right, model.value, model.roots
    )
    return float(out[0]) if single else out


def auc_score(scores, labels) -> float:
    """Mann-Whitney AUC with ties counted 1/2; NaN when a class is missing."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(s)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def evaluate(scores, labels, threshold: float = 0.5) -> EvalReport:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.size == 0 or s.size != y.size:
        raise DataError("scores and labels must be non-empty and equally long")
    acc = float(np.mean((s >= threshold) == y))
    return EvalReport(acc=acc, auc=auc_score(s, y), n=int(y.size), positive_fraction=float(y.mean()))


def assign_folds(n: int, k: int = 10, seed: int = 0, labels=None, groups=None) -> np.ndarray:
    """Fold index per sample.

    Default: random permutation dealt round-robin, so fold sizes differ by at
    most one. ``labels`` stratifies; ``groups`` keeps each group in one fold.
    """
    if k < 2:
        raise DataError("k must be >= 2")
    if k > n:
        raise DataError(f"k={k} folds but only {n} samples")
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=np.intp)
    if groups is not None:
        uniq, inv = np.unique(np.asarray(groups), return_inverse=True)
        if uniq.size < k:
            raise DataError(f"k={k} folds but only {uniq.size} groups")
        gfold = np.empty(uniq.size, dtype=np.intp)
        gfold[rng.permutation(uniq.size)] = np.arange(uniq.size) % k
        return gfold[inv]
    if labels is not None:
        y = np.asarray(labels, dtype=bool)
        start = 0
        for cls in (False, True):
            members = np.flatnonzero(y == cls)
            members = members[rng.permutation(members.size)]
            folds[members] = (start + np.arange(members.size)) % k
            start += members.size
        return folds
    folds[rng.permutation(n)] = np.arange(n) % k
    return folds


def cross_validate(
    features,
    labels,
    k: int = 10,
    seed: int = 0,
    stratified: bool = False,
    groups=None,
    n_jobs: int = 1,
    **forest_params,
) -> EvalReport:
    """k-fold CV; the aggregate ACC/AUC are unweighted means over folds.

    Folds whose test part has one class only contribute ACC but not AUC.
    """
    X = as_matrix(features)
    y = np.asarray(labels, dtype=bool)
    n = X.shape[0]
    folds = assign_folds(n, k, seed, labels=y if stratified else None, groups=groups)
    fold_seeds = np.random.SeedSequence(seed).generate_state(k)
    per_fold = []
    for i in range(k):
        test = folds == i
        model = train_forest(X[~test], y[~test], seed=int(fold_seeds[i]), n_jobs=n_jobs, **forest_params)
        rep = evaluate(predict_proba(model, X[test]), y[test])
        per_fold.append((rep.acc, rep.auc))
    accs = np.array([a for a, _ in per_fold])
    aucs = np.array([u for _, u in per_fold])
    auc = float(np.nanmean(aucs)) if np.any(np.isfinite(aucs)) else float("nan")
    return EvalReport(acc=float(accs.mean()), auc=auc, per_fold=per_fold, n=n, positive_fraction=float(y.mean()))


# Binary model format (little-endian):
#   4s magic "MXRF" | u32 version | u64 header length | header JSON (utf-8)
#   followed by the arrays listed in header["arrays"] as raw bytes, in order.
_ARRAYS = (
    ("feature", "<i8"),
    ("threshold", "<f8"),
    ("left", "<i8"),
    ("right", "<i8"),
    ("value", "<f8"),
    ("counts", "<f8"),
    ("roots", "<i8"),
)


def save_model(model: ForestModel, stream: BinaryIO) -> None:
    header = {
        "format": "meterxai-forest",
        "n_features": model.n_features,
        "seed": model.seed,
        "feature_names": list(model.feature_names),
        "target": model.target,
        "class_prior": model.class_prior,
        "params": model.params,
        "arrays": [
            {"name": name, "dtype": dtype, "shape": list(getattr(model, name).shape)}
            for name, dtype in _ARRAYS
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    stream.write(MODEL_MAGIC + struct.pack("<IQ", MODEL_VERSION, len(blob)) + blob)
    for name, dtype in _ARRAYS:
        stream.write(np.ascontiguousarray(getattr(model, name), dtype=dtype).tobytes())


def load_model(stream: BinaryIO) -> ForestModel:
    head = stream.read(16)
    if len(head) != 16 or head[:4] != MODEL_MAGIC:
        raise DataError("not a meterxai forest model file")
    version, hlen = struct.unpack("<IQ", head[4:])
    if version != MODEL_VERSION:
        raise DataError(f"unsupported model version {version}")
    header = json.loads(stream.read(hlen).decode("utf-8"))
    arrays = {}
    for spec in header["arrays"]:
        dtype = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"]))
        raw = stream.read(count * dtype.itemsize)
        if len(raw) != count * dtype.itemsize:
            raise DataError("truncated model file")
        arr = np.frombuffer(raw, dtype=dtype).reshape(spec["shape"])
        arrays[spec["name"]] = arr.astype(np.intp if dtype.kind == "i" else np.float64)
    return ForestModel(
        n_features=header["n_features"],
        seed=header["seed"],
        feature_names=tuple(header["feature_names"]),
        target=header["target"],
        class_prior=header["class_prior"],
        params=header["params"],
        **arrays,
    )
