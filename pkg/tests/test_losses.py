import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_cate.losses import (Huber, SquaredError, Tukey, Welsch, evaluate_loss, huber_are, mad,
                                minimax_delta)

KINDS = [SquaredError(), Huber(1.345), Huber(0.5), Welsch(1.34), Welsch(0.5), Tukey(4.685)]


def test_welsch_at_zero():
    ev = evaluate_loss(Welsch(1.34), 0.0)
    assert ev.rho == 0.0 and ev.psi == 0.0 and ev.psi_prime == 1.0


def test_welsch_psi_peak():
    c = 1.34
    loss = Welsch(c)
    r_star = c / math.sqrt(2)
    peak = c * math.exp(-0.5) / math.sqrt(2)
    assert evaluate_loss(loss, r_star).psi == pytest.approx(peak, rel=1e-14)
    grid = np.linspace(-20, 20, 20001)
    assert np.max(loss.psi(grid)) <= peak + 1e-15
    assert loss.psi_max == pytest.approx(peak)


def test_welsch_limit():
    c = 1.34
    ev = evaluate_loss(Welsch(c), 1e4)
    assert ev.rho == pytest.approx(c * c / 2)
    assert ev.psi == pytest.approx(0.0, abs=1e-300)


def test_huber_saturates():
    assert evaluate_loss(Huber(1.345), 3.0).psi == 1.345
    assert evaluate_loss(Huber(1.345), -3.0).psi == -1.345
    assert evaluate_loss(Huber(1.345), 0.7).psi == 0.7


def test_tukey_constant_beyond_c():
    t = Tukey(4.685)
    assert t.rho(5.0) == t.rho(50.0) == pytest.approx(4.685**2 / 6)
    assert t.psi(5.0) == 0.0


def test_non_finite_residual_rejected():
    with pytest.raises(ValueError):
        evaluate_loss(Welsch(1.34), float("nan"))
    with pytest.raises(ValueError):
        evaluate_loss(Huber(1.0), float("inf"))


@pytest.mark.parametrize("bad", [0.0, -1.0, float("inf"), float("nan")])
def test_tuning_constants_validated(bad):
    for cls in (Huber, Welsch, Tukey):
        with pytest.raises(ValueError):
            cls(bad)


@pytest.mark.parametrize("kind", KINDS, ids=lambda k: repr(k))
def test_identities_at_zero(kind):
    ev = evaluate_loss(kind, 0.0)
    assert ev.rho == 0.0 and ev.psi == 0.0 and ev.psi_prime > 0


def _fd_ok(kind, r):
    # avoid the Huber and Tukey kinks where one-sided derivatives differ
    kinks = []
    if isinstance(kind, Huber):
        kinks = [kind.delta]
    if isinstance(kind, Tukey):
        kinks = [kind.c]
    return all(abs(abs(r) - k) > 1e-3 for k in kinks)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(KINDS), st.floats(-8, 8, allow_nan=False))
def test_derivatives_match_finite_differences(kind, r):
    if not _fd_ok(kind, r):
        return
    h = 1e-5
    ev = evaluate_loss(kind, r)
    d_rho = (kind.rho(r + h) - kind.rho(r - h)) / (2 * h)
    d_psi = (kind.psi(r + h) - kind.psi(r - h)) / (2 * h)
    assert abs(d_rho - ev.psi) <= 1e-6 * max(1.0, abs(ev.psi))
    assert abs(d_psi - ev.psi_prime) <= 1e-6 * max(1.0, abs(ev.psi_prime))


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 10), st.floats(-1e6, 1e6, allow_nan=False))
def test_welsch_psi_bounded(c, r):
    assert abs(Welsch(c).psi(r)) <= c * math.exp(-0.5) / math.sqrt(2) * (1 + 1e-12)


def test_minimax_delta_residual_and_errors():
    from scipy.stats import norm
    for eps in (0.01, 0.05, 0.1, 0.25, 0.4, 0.49):
        d = minimax_delta(eps)
        resid = norm.pdf(d) / d - norm.sf(d) - eps / (2 * (1 - eps))
        assert abs(resid) < 1e-10
    for bad in (0.0, 0.5, -0.1, 0.7):
        with pytest.raises(ValueError):
            minimax_delta(bad)


def test_minimax_delta_strictly_decreasing():
    eps = np.linspace(0.005, 0.49, 50)
    deltas = np.array([minimax_delta(e) for e in eps])
    assert np.all(np.diff(deltas) < 0)


@pytest.mark.parametrize("delta, are", [(1.345, 0.950), (1.0, 0.903), (0.5, 0.792), (10.0, 1.0)])
def test_huber_are_table(delta, are):
    assert huber_are(delta) == pytest.approx(are, abs=1e-3)


def test_huber_are_monotone_and_errors():
    vals = [huber_are(d) for d in np.linspace(0.1, 4, 40)]
    assert np.all(np.diff(vals) > 0)
    with pytest.raises(ValueError):
        huber_are(0.0)


def test_mad_examples():
    assert mad([1, 2, 3, 4, 5], consistency_scaled=False) == 1.0
    with pytest.raises(ValueError):
        mad([5, 5, 5])
    z = np.random.default_rng(0).standard_normal(100_000)
    assert mad(z, consistency_scaled=True) == pytest.approx(1.0, abs=0.02)
