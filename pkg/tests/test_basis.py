import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_cate.basis import (DEFAULT_THRESHOLDS, BasisSpec, Intercept, Linear, Power, SplineKnot, TailIndicator,
                               bma_over_thresholds, evaluate_basis, format_basis, grid_search_threshold, parse_basis)
from tests.conftest import QUICK_SAMPLER


def test_intercept_only(rng):
    phi = evaluate_basis(BasisSpec.intercept(), rng.standard_normal((7, 3))).phi
    assert phi.shape == (7, 1) and np.all(phi == 1)


def test_tail_indicator_example():
    phi = evaluate_basis(BasisSpec.tail(1.96), np.array([[2.5, 0.0], [-2.5, 0.0], [1.0, 9.0]])).phi
    assert phi.tolist() == [[1, 1], [1, 1], [1, 0]]
    one_sided = evaluate_basis(BasisSpec.tail(1.96, two_sided=False), np.array([[-2.5]])).phi
    assert one_sided.tolist() == [[1, 0]]


def test_polynomial_example():
    spec = BasisSpec((Intercept(), Linear(0), Power(0, 2)))
    assert evaluate_basis(spec, np.array([[2.0]])).phi.tolist() == [[1, 2, 4]]


def test_spline_knot():
    spec = BasisSpec((SplineKnot(0, 0.5),))
    assert evaluate_basis(spec, np.array([[0.0], [2.0]])).phi.ravel().tolist() == [0.0, 1.5]


def test_feature_out_of_range():
    with pytest.raises(ValueError):
        evaluate_basis(BasisSpec((Linear(3),)), np.zeros((4, 2)))


def test_parse_and_format_round_trip():
    text = "1, x0, x1^3, tail(0,1.96), tail1(2,0.5), knot(1,-0.25)"
    spec = parse_basis(text)
    assert spec.p == 6 and spec.max_feature() == 2
    assert parse_basis(format_basis(spec)) == spec
    with pytest.raises(ValueError):
        parse_basis("1, y0")


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 60), st.integers(0, 10_000))
def test_row_permutation_equivariance(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 3))
    perm = rng.permutation(n)
    spec = parse_basis("1, x0, x1^2, tail(2,0.5), knot(0,0.1)")
    assert np.array_equal(evaluate_basis(spec, X[perm]).phi, evaluate_basis(spec, X).phi[perm])


def _step_data(n=4000, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2))
    d = np.where(np.abs(X[:, 0]) > 1.96, 10.0, 2.0)
    return X, d


def test_grid_search_single_candidate():
    X, d = _step_data(200)
    assert grid_search_threshold(d, X, 0, [2.7]) == 2.7


def test_grid_search_noiseless_step():
    X, d = _step_data()
    cands = np.arange(1.0, 3.01, 0.25)
    assert abs(grid_search_threshold(d, X, 0, cands) - 1.96) <= 0.5


def test_grid_search_deterministic_on_noise(rng):
    X = rng.standard_normal((500, 2))
    d = rng.standard_normal(500)
    a = grid_search_threshold(d, X, 0, DEFAULT_THRESHOLDS)
    assert a == grid_search_threshold(d.copy(), X.copy(), 0, DEFAULT_THRESHOLDS)


def test_grid_search_all_degenerate():
    X, d = _step_data(100)
    with pytest.raises(ValueError):
        grid_search_threshold(d, X, 0, [50.0, 60.0])


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 1000))
def test_grid_search_scale_invariant(k, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((400, 1))
    d = np.where(np.abs(X[:, 0]) > 1.5, 5.0, 1.0) + rng.standard_normal(400)
    assert grid_search_threshold(d, X, 0, DEFAULT_THRESHOLDS) == grid_search_threshold(k * d, X, 0, DEFAULT_THRESHOLDS)


def test_bma_identical_candidates_equal_weights(rng):
    X = rng.standard_normal((200, 1))
    d = 2.0 + np.where(np.abs(X[:, 0]) > 1.0, 3.0, 0.0) + rng.standard_normal(200)
    res = bma_over_thresholds(d, X, 0, [1.0, 1.0], sampler=QUICK_SAMPLER, seed=3)
    # different chain seeds give slightly different posterior means
    assert res.weights == pytest.approx([0.5, 0.5], abs=1e-3)
    assert abs(res.weights.sum() - 1) < 1e-12


def test_bma_weights_simplex(rng):
    X = rng.standard_normal((300, 1))
    d = 2.0 + np.where(np.abs(X[:, 0]) > 1.5, 8.0, 0.0) + rng.standard_normal(300)
    res = bma_over_thresholds(d, X, 0, [1.0, 1.5, 2.5], sampler=QUICK_SAMPLER)
    assert abs(res.weights.sum() - 1) < 1e-12 and np.all(res.weights >= 0)
    assert res.candidates[int(np.argmax(res.weights))] == 1.5
    assert res.tau_draws.shape == (4000, 300)
