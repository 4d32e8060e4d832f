import io
import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from meterxai.attribution import (
    Attribution,
    SegmentScheme,
    all_coalitions,
    exact_shapley,
    explain_kernel_shap,
    explain_lime,
    forest_model_fn,
    masked_instances,
    random_attribution,
    shapley_kernel_weight,
    write_attribution,
)
from meterxai.errors import DataError, NumericError
from meterxai.forest import train_forest


def permutation_shapley(value_fn, n):
    """Average marginal contribution over all n! orderings."""
    phi = np.zeros(n)
    perms = list(itertools.permutations(range(n)))
    for perm in perms:
        s = set()
        for i in perm:
            before = value_fn(frozenset(s))
            s.add(i)
            phi[i] += value_fn(frozenset(s)) - before
    return phi / len(perms)


def segment_means(scheme, X):
    X = np.atleast_2d(X)
    sizes = np.bincount(scheme.mapping)
    return np.stack([np.bincount(scheme.mapping, weights=row) / sizes for row in X])


def linear_model(scheme, w):
    return lambda X: segment_means(scheme, X) @ w


def test_exact_shapley_worked_example():
    v = {frozenset(): 0, frozenset({0}): 1, frozenset({1}): 2, frozenset({0, 1}): 4}
    assert_allclose(exact_shapley(v.__getitem__, 2), [1.5, 2.5])


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10**6))
def test_exact_shapley_matches_permutation_oracle(n, seed):
    table = np.random.default_rng(seed).normal(size=2**n)
    fn = lambda s: table[sum(1 << i for i in s)]
    assert_allclose(exact_shapley(fn, n), permutation_shapley(fn, n), atol=1e-12)


def test_exact_shapley_axioms():
    c = np.array([0.5, -1.0, 2.0, 0.0])
    assert_allclose(exact_shapley(lambda s: sum(c[i] for i in s), 4), c, atol=1e-12)
    phi = exact_shapley(lambda s: float(len(s - {2}) ** 2), 4)
    assert phi[2] == 0.0
    with pytest.raises(DataError):
        exact_shapley(lambda s: 0.0, 13)


def test_kernel_weight_and_coalitions():
    assert_allclose(shapley_kernel_weight(4, np.array([1, 2, 3])), [3 / (4 * 3), 3 / (6 * 4), 3 / (4 * 3)])
    Z = all_coalitions(3)
    assert Z.shape == (8, 3)
    assert_array_equal(Z[5], [True, False, True])


def test_masked_instances():
    s = SegmentScheme.contiguous(2)
    out = masked_instances(np.ones(336), np.zeros(336), s, [[True, False]])
    assert out[0, :168].sum() == 168 and out[0, 168:].sum() == 0


def test_linear_model_full_enumeration(rng):
    s = SegmentScheme.contiguous(8)
    w = rng.normal(size=8)
    x, b = rng.random(336), rng.random(336)
    attr = explain_kernel_shap(linear_model(s, w), x, s, b)
    assert attr.meta["full_enumeration"]
    expected = w * (segment_means(s, x)[0] - segment_means(s, b)[0])
    assert_allclose(attr.phi, expected, atol=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 9), st.integers(0, 10**6))
def test_full_enumeration_equals_exact_shapley(m, seed):
    rng = np.random.default_rng(seed)
    s = SegmentScheme.contiguous(m)
    x, b = rng.random(336), rng.random(336)
    W = rng.normal(size=(m, m))

    def model(X):
        z = segment_means(s, X)
        return np.tanh(z @ W).sum(axis=1) + z.prod(axis=1)

    attr = explain_kernel_shap(model, x, s, b)
    value = lambda S: model(masked_instances(x, b, s, [[i in S for i in range(m)]]))[0]
    assert_allclose(attr.phi, exact_shapley(value, m), atol=1e-9)
    assert_allclose(attr.phi.sum(), attr.prediction - attr.base_value, atol=1e-9)


def test_symmetry_and_dummy(rng):
    s = SegmentScheme.contiguous(6)
    x = rng.random(336)
    x[s.mapping == 1] = x[s.mapping == 0][::-1].copy()  # same segment mean
    b = np.zeros(336)
    b[s.mapping == 4] = x[s.mapping == 4]  # segment 4 equals background
    model = lambda X: np.sin(segment_means(s, X)[:, :2].sum(axis=1)) + segment_means(s, X)[:, 4] ** 2
    phi = explain_kernel_shap(model, x, s, b).phi
    assert_allclose(phi[0], phi[1], atol=1e-12)
    assert abs(phi[4]) < 1e-12


def test_sampled_kernel_shap_close_to_exact(small_model, small_corpus):
    _, data = small_corpus
    s = SegmentScheme.contiguous(8)
    fn = forest_model_fn(small_model)
    weeks = next(iter(data.values()))
    x = weeks[0].values
    b = np.tile(weeks[0].days.mean(axis=0), 7)
    exact = explain_kernel_shap(fn, x, s, b)
    sampled = explain_kernel_shap(fn, x, s, b, n_coalitions=2000, seed=3, full_enumeration=False)
    assert np.max(np.abs(sampled.phi - exact.phi)) <= 0.05
    assert_allclose(sampled.phi.sum(), exact.phi.sum(), atol=1e-9)


def test_kernel_shap_is_seeded(rng):
    s = SegmentScheme.hourly_by_day()
    model = lambda X: np.tanh(X[:, 30:40].sum(axis=1) - X.mean(axis=1))
    x, b = rng.random(336), rng.random(336)
    a1 = explain_kernel_shap(model, x, s, b, n_coalitions=500, seed=1)
    a2 = explain_kernel_shap(model, x, s, b, n_coalitions=500, seed=1)
    assert_array_equal(a1.phi, a2.phi)


def test_kernel_shap_errors_and_degenerate(rng):
    s = SegmentScheme.hourly_by_day()
    x = rng.random(336)
    with pytest.raises(NumericError):
        explain_kernel_shap(lambda X: np.full(len(X), np.nan), x, s, x * 0.5, n_coalitions=400)
    with pytest.raises(DataError, match="coalitions"):
        explain_kernel_shap(lambda X: X.sum(axis=1), x, s, n_coalitions=100)
    attr = explain_kernel_shap(lambda X: np.zeros(len(X)), x, s, x * 0.5, n_coalitions=400)
    assert_array_equal(attr.phi, 0.0)


def test_lime_constant_model(rng):
    s = SegmentScheme.contiguous(10)
    attr = explain_lime(lambda X: np.full(len(X), 0.3), rng.random(336), s, 200, seed=0, background=np.zeros(336))
    assert np.max(np.abs(attr.phi)) < 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_lime_and_shap_find_indicator_segment(seed):
    rng = np.random.default_rng(seed)
    s = SegmentScheme.contiguous(10)
    x, b = rng.random(336) + 1.0, np.zeros(336)
    model = lambda X: (X[:, s.mapping == 5].mean(axis=1) > 0.5).astype(float)
    lime = explain_lime(model, x, s, 300, seed=seed, background=b)
    shap = explain_kernel_shap(model, x, s, b)
    assert np.argmax(np.abs(lime.phi)) == 5
    assert np.argmax(np.abs(shap.phi)) == 5
    assert np.sign(lime.phi[5]) == np.sign(shap.phi[5]) == 1


def test_lime_deterministic_and_validated(rng):
    s = SegmentScheme.contiguous(12)
    x = rng.random(336)
    model = lambda X: X[:, :50].mean(axis=1)
    a = explain_lime(model, x, s, 100, seed=4)
    b = explain_lime(model, x, s, 100, seed=4)
    assert_array_equal(a.phi, b.phi)
    assert a.meta["kernel_width"] == pytest.approx(0.25 * math.sqrt(12))
    with pytest.raises(DataError, match="perturbations"):
        explain_lime(model, x, s, 23)


@pytest.mark.parametrize("seed", range(12))
def test_lime_ridge_fallback_flag_matches_design_rank(seed):
    s = SegmentScheme.contiguous(3)
    x = np.random.default_rng(seed).random(336)
    attr = explain_lime(lambda X: X.mean(axis=1), x, s, 6, seed=seed, background=np.zeros(336))
    rng = np.random.default_rng(seed)
    n_off = rng.integers(1, 4, size=5)
    ranks = np.argsort(np.argsort(rng.random((5, 3)), axis=1), axis=1)
    Z = np.vstack([np.ones((1, 3), bool), ranks >= n_off[:, None]])
    D = np.hstack([np.ones((6, 1)), Z])
    assert attr.meta.get("ridge_fallback", False) == (np.linalg.matrix_rank(D) < 4)
    assert np.all(np.isfinite(attr.phi))


def test_schemes():
    h = SegmentScheme.hourly_by_day()
    assert h.n_segments == 168 and h.day_resolved
    day, stamp = h.day_and_stamp()
    assert (day[25], stamp[25]) == (1, 2)
    t = SegmentScheme.time_of_day(24)
    assert t.n_segments == 24 and not t.day_resolved
    assert t.bounds()[18] == (36, 38)
    with pytest.raises(DataError, match="per-day"):
        t.day_and_stamp()
    assert SegmentScheme.slots().n_segments == 336
    with pytest.raises(DataError):
        SegmentScheme(np.zeros(335, dtype=int))
    with pytest.raises(DataError):
        SegmentScheme(np.r_[np.zeros(300), np.full(36, 2)].astype(int))


def test_attribution_pooling_and_export():
    s = SegmentScheme.time_of_day(24)
    phi = np.zeros(24)
    phi[18] = 1.0
    attr = Attribution(s, phi, 0.2, 0.9, "kernel-shap", 0)
    tod = attr.time_of_day_phi()
    assert_allclose(tod[36:38], 0.5)
    assert_allclose(tod.sum(), 1.0)
    c, j = io.StringIO(), io.StringIO()
    write_attribution(attr, c, j)
    lines = c.getvalue().splitlines()
    assert lines[0] == "segment_index,start,end,phi"
    assert lines[19] == "18,36,38,1.0"
    meta = json.loads(j.getvalue())
    assert meta["method"] == "kernel-shap" and meta["base_value"] == 0.2 and meta["prediction"] == 0.9
    with pytest.raises(DataError):
        Attribution(s, np.zeros(5), 0, 0, "x")
    with pytest.raises(NumericError):
        Attribution(s, np.full(24, np.inf), 0, 0, "x")


def test_random_attribution_seeded():
    s = SegmentScheme.hourly_by_day()
    assert_array_equal(random_attribution(s, 3).phi, random_attribution(s, 3).phi)
