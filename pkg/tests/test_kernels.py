import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from meterxai import _kernels, _kernels_py, forest

needs_ext = pytest.mark.skipif(_kernels.BACKEND != "compiled", reason="compiled extension not built")


def brute_split(X, y, w, idx, order, mtry):
    """Exhaustive weighted-Gini scan over the first ``mtry`` non-constant features."""
    best = None
    visited = 0
    for f in order:
        if visited >= mtry:
            break
        vals = sorted(set(X[idx, f].tolist()))
        if len(vals) < 2:
            continue
        visited += 1
        for a, b in zip(vals[:-1], vals[1:]):
            left = [i for i in idx if X[i, f] <= a]
            right = [i for i in idx if X[i, f] > a]

            def gini(rows):
                tot = sum(w[i] for i in rows)
                p = sum(w[i] * y[i] for i in rows) / tot
                return tot * 2 * p * (1 - p)

            imp = gini(left) + gini(right)
            key = (imp, f, a)
            if best is None or key < best[0]:
                t = (a + b) / 2
                best = (key, f, t if t != b else a)
    return (-1, 0.0) if best is None else (best[1], best[2])


def split_case(seed, n=25, p=5, ties=False):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 6, (n, p)).astype(float) if ties else rng.normal(size=(n, p))
    y = (rng.random(n) < 0.5).astype(float)
    w = rng.integers(1, 4, n).astype(float)
    idx = np.sort(rng.choice(n, size=n - 3, replace=False)).astype(np.intp)
    order = rng.permutation(p).astype(np.intp)
    return np.ascontiguousarray(X), y, w, idx, order


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("ties", [False, True])
def test_best_split_matches_brute_force(seed, ties):
    X, y, w, idx, order = split_case(seed, ties=ties)
    f, t, _ = _kernels.best_split(X, y, w, idx, order, 3)
    bf, bt = brute_split(X, y, w, idx, order, 3)
    assert f == bf
    assert t == bt


def test_constant_features_do_not_count_toward_mtry():
    X = np.zeros((6, 3))
    X[:, 2] = [0, 0, 0, 1, 1, 1]
    y = np.array([0, 0, 0, 1, 1, 1.0])
    idx = np.arange(6, dtype=np.intp)
    f, t, _ = _kernels.best_split(X, y, np.ones(6), idx, np.arange(3, dtype=np.intp), 1)
    assert (f, t) == (2, 0.5)
    f, _, _ = _kernels.best_split(X[:, :2].copy(), y, np.ones(6), idx, np.arange(2, dtype=np.intp), 2)
    assert f == -1


def test_tie_goes_to_lower_feature_index():
    col = np.array([0, 1, 2, 3, 4, 5.0])
    X = np.column_stack([col, col, col])
    y = np.array([0, 0, 0, 1, 1, 1.0])
    idx = np.arange(6, dtype=np.intp)
    f, t, _ = _kernels.best_split(X, y, np.ones(6), idx, np.array([2, 0, 1], dtype=np.intp), 3)
    assert (f, t) == (0, 2.5)


def test_midpoint_rounding_falls_back_to_lower_value():
    a = 1.0
    b = np.nextafter(a, 2.0)
    X = np.array([[a], [b]])
    f, t, _ = _kernels.best_split(X, np.array([0, 1.0]), np.ones(2), np.arange(2, dtype=np.intp),
                                  np.zeros(1, dtype=np.intp), 1)
    assert f == 0 and t == a


@needs_ext
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.booleans(), st.integers(1, 5))
def test_backends_agree_on_split(seed, ties, mtry):
    from meterxai import _kernels_ext

    X, y, w, idx, order = split_case(seed, n=40, ties=ties)
    assert _kernels_ext.best_split(X, y, w, idx, order, mtry) == _kernels_py.best_split(X, y, w, idx, order, mtry)


@needs_ext
def test_backends_grow_identical_forests(monkeypatch):
    rng = np.random.default_rng(4)
    X = rng.normal(size=(150, 12))
    y = X[:, 0] + 0.5 * rng.normal(size=150) > 0
    ext = forest.train_forest(X, y, n_trees=8, seed=11)
    monkeypatch.setattr(_kernels, "best_split", _kernels_py.best_split)
    monkeypatch.setattr(_kernels, "predict_forest", _kernels_py.predict_forest)
    py = forest.train_forest(X, y, n_trees=8, seed=11)
    for name in ("feature", "threshold", "left", "right", "value", "roots"):
        assert_array_equal(getattr(ext, name), getattr(py, name))
    probe = rng.normal(size=(50, 12))
    assert_array_equal(
        _kernels_py.predict_forest(probe, py.feature, py.threshold, py.left, py.right, py.value, py.roots),
        forest.predict_proba(ext, probe),
    )


def test_two_stump_vote_average():
    # tree 0: leaf 1.0 ; tree 1: leaf 0.0
    feature = np.array([-1, -1], dtype=np.intp)
    out = _kernels.predict_forest(np.zeros((3, 2)), feature, np.zeros(2), -np.ones(2, dtype=np.intp),
                                  -np.ones(2, dtype=np.intp), np.array([1.0, 0.0]), np.array([0, 1], dtype=np.intp))
    assert_allclose(out, 0.5)


def test_env_var_forces_fallback():
    env = dict(os.environ, METERXAI_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from meterxai import _kernels; print(_kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
