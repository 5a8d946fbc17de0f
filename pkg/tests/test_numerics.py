import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from steincov import make_family
from steincov.errors import DimensionMismatch, InvalidParameter, InvalidRange, NoConvergence, NotSelfAdjoint
from steincov.numerics import (RngState, Tolerance, expectation, integrate_batch, integrate_interval,
                               quantile_grid, sample, sum_interval, weighted_eigensystem)


def test_tolerance_validation():
    with pytest.raises(InvalidParameter):
        Tolerance(abs=0, rel=0)
    with pytest.raises(InvalidParameter):
        Tolerance(abs=-1)


@pytest.mark.parametrize("f, lo, hi, exact", [
    (np.exp, 0.0, 1.0, math.e - 1),
    (lambda u: np.exp(-u * u), -math.inf, math.inf, math.sqrt(math.pi)),
    (lambda u: 1 / (1 + u * u), 0.0, math.inf, math.pi / 2),
    (lambda u: np.exp(u), -math.inf, 0.0, 1.0),
    (lambda u: u ** -0.5, 0.0, 1.0, 2.0),
])
def test_integrate_interval_against_closed_forms(f, lo, hi, exact):
    tol = Tolerance(abs=1e-14, rel=1e-12)
    assert integrate_interval(f, lo, hi, tol) == pytest.approx(exact, rel=1e-10)


def test_integrate_interval_range_checks():
    assert integrate_interval(np.exp, 1.0, 1.0) == 0.0
    with pytest.raises(InvalidRange):
        integrate_interval(np.exp, 1.0, 0.0)


@given(st.floats(0.1, 5), st.floats(0.1, 5))
@settings(max_examples=30, deadline=None)
def test_integrate_batch_agrees_with_scipy_quad(a, b):
    lo = np.array([0.0, 0.0])
    hi = np.array([a, math.inf])
    vals, _ = integrate_batch(lambda u, o: np.exp(-b * u) * np.cos(u), lo, hi, Tolerance(1e-13, 1e-11))
    ref0 = integrate.quad(lambda u: math.exp(-b * u) * math.cos(u), 0, a, epsabs=1e-14)[0]
    ref1 = b / (1 + b * b)
    assert vals[0] == pytest.approx(ref0, rel=1e-9, abs=1e-12)
    assert vals[1] == pytest.approx(ref1, rel=1e-9)


def test_sum_interval_infinite_tail():
    from scipy.special import gammaln
    s = sum_interval(lambda j: np.exp(j * math.log(2.0) - gammaln(j + 1)), 0, math.inf, tail_tol=1e-18)
    assert s == pytest.approx(math.exp(2.0), rel=1e-14)
    g = sum_interval(lambda j: j * 0.9 ** j, 0, math.inf, tail_tol=1e-16)
    assert g == pytest.approx(90.0, rel=1e-12)
    assert sum_interval(lambda j: j + 0.0, -3, 5) == 9.0


def test_sum_interval_reports_slow_tails():
    with pytest.raises(NoConvergence):
        sum_interval(lambda j: 1.0 / (j * j), 1, math.inf, tail_tol=1e-16, max_terms=10_000)


@pytest.mark.parametrize("name, params, ref", [
    ("normal", [1.0, 4.0], stats.norm(1, 2)), ("gamma", [2.5, 1.5], stats.gamma(2.5, scale=1.5)),
    ("beta", [2.0, 3.0], stats.beta(2, 3)), ("poisson", [3.0], stats.poisson(3)),
    ("binomial", [12, 0.3], stats.binom(12, 0.3)), ("negbinomial", [3, 0.4], stats.nbinom(3, 0.4)),
])
def test_expectation_matches_scipy_moments(name, params, ref):
    d = make_family(name, params)
    assert expectation(d, lambda x: x) == pytest.approx(ref.mean(), rel=1e-9)
    assert expectation(d, lambda x: (x - ref.mean()) ** 2) == pytest.approx(ref.var(), rel=1e-8)


def test_rng_split_is_deterministic_and_distinct():
    r = RngState(7)
    a = r.split(1).generator().random(4)
    b = RngState(7).split(1).generator().random(4)
    c = r.split(2).generator().random(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_sample_moments():
    d = make_family("gamma", [2.0, 1.0])
    x = sample(d, 200_000, RngState(1))
    assert abs(x.mean() - 2.0) < 5 * math.sqrt(2.0 / x.size)


def test_quantile_grid():
    d = make_family("normal", [0, 1])
    g = quantile_grid(d, 0.1, 0.9, 5)
    assert np.allclose(g, stats.norm.ppf(np.linspace(0.1, 0.9, 5)), atol=1e-12)
    p = quantile_grid(make_family("poisson", [2]), 0.01, 0.99, 5)
    assert p.tolist() == list(map(float, range(int(stats.poisson.ppf(0.01, 2)), int(stats.poisson.ppf(0.99, 2)) + 1)))
    with pytest.raises(InvalidParameter):
        quantile_grid(d, 0.5, 0.4, 5)


def test_weighted_eigensystem():
    rng = np.random.default_rng(0)
    w = rng.uniform(0.5, 2, 5)
    A = rng.normal(size=(5, 5))
    A = A + A.T
    M = A / w[:, None]  # w M symmetric
    vals, vecs = weighted_eigensystem(M, w)
    assert np.all(np.diff(vals) >= 0)
    assert np.allclose(M @ vecs, vecs * vals, atol=1e-10)
    assert np.allclose(vecs.T @ (w[:, None] * vecs), np.eye(5), atol=1e-10)
    with pytest.raises(NotSelfAdjoint):
        weighted_eigensystem(A + np.triu(np.ones((5, 5))), np.ones(5))
    with pytest.raises(DimensionMismatch):
        weighted_eigensystem(A, np.ones(4))
