import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from conftest import CASES, ctx_for
from steincov import (RealFn, RngState, asymmetric_bl_bound, brascamp_lieb_upper, cov_exact, cov_identity_rhs,
                      eigen_selfadjoint_check, eigen_weight_analysis, lagrange_gap, lower_cramer_rao,
                      named_function, polynomial, stein_kernel, table_bounds, upper_klaassen_cov, variance_sandwich)
from steincov.bounds import (SQRT_HALF_PI, WeightFn, gaussian_kernel_ratio, gaussian_sup_factor,
                             klaassen_weight, mills_envelope, mills_ratio, nonuniform_factor_bound,
                             selfadjoint_matrix, uniform_stein_factor)
from steincov.errors import BoundaryViolation, InfiniteSupport, InvalidParameter, NotDecreasing, NotLogConcave
from steincov.verify import oracle_covariance_finite, oracle_double_form_finite


def test_cov_exact_against_moments():
    ctx = ctx_for("normal", [1.5, 2.0])
    # Cov[X, X^2] = 2 mu sigma^2
    assert cov_exact(ctx, "identity", "square") == pytest.approx(2 * 1.5 * 2.0, rel=1e-11)
    b = ctx_for("binomial", [7, 0.3])
    assert cov_exact(b, "identity", "identity") == pytest.approx(7 * 0.3 * 0.7, rel=1e-13)


@pytest.mark.parametrize("name, params, ell", CASES)
def test_covariance_identity_both_forms(name, params, ell):
    ctx = ctx_for(name, params, ell)
    pairs = [("identity", "square"), ("atan", "identity"), ("square", "square")]
    for fn, gn in pairs:
        cov = cov_exact(ctx, fn, gn)
        for form in ("single", "double"):
            rhs = cov_identity_rhs(ctx, fn, gn, form)
            assert rhs == pytest.approx(cov, rel=1e-7, abs=1e-10), (fn, gn, form)


def test_double_form_matches_exact_oracle():
    ctx = ctx_for("hypergeom", [5, 4, 10], 1)
    f, g = named_function("square"), named_function("cube")
    exact = oracle_double_form_finite(ctx.dist, 1, f, g)
    assert exact == oracle_covariance_finite(ctx.dist, f, g)
    assert cov_identity_rhs(ctx, f, g, "double") == pytest.approx(float(exact), rel=1e-12)


def test_strict_identity_rejects_boundary_failures():
    ctx = ctx_for("binomial", [6, 0.4], -1)
    with pytest.raises(BoundaryViolation):
        cov_identity_rhs(ctx, "one", "identity", strict=True)
    with pytest.raises(InvalidParameter):
        cov_identity_rhs(ctx, "identity", "identity", form="triple")


@pytest.mark.parametrize("name, params, ell", CASES)
def test_cramer_rao_lower_bound(name, params, ell):
    ctx = ctx_for(name, params, ell)
    for gn in ("identity", "square", "atan"):
        lo = lower_cramer_rao(ctx, gn, stein_kernel(ctx))
        assert lo <= cov_exact(ctx, gn, gn) * (1 + 1e-9) + 1e-12


def test_cramer_rao_gaussian_is_sharp_for_linear_g(normal_ctx):
    # T(1) = -x, E[1 * 1]^2 / E[x^2] = 1 = Var X
    one = named_function("one")
    assert lower_cramer_rao(normal_ctx, "identity", one) == pytest.approx(1.0, rel=1e-12)


def test_gaussian_chernoff_sandwich(normal_ctx):
    rep = variance_sandwich(normal_ctx, "square")
    assert (rep.lower, rep.center, rep.upper) == pytest.approx((0.0, 2.0, 4.0), abs=1e-8)
    assert rep.weight_provenance == "closed-form" and rep.boundary_status == "pass"
    rep = variance_sandwich(normal_ctx, "identity")
    assert (rep.lower, rep.center, rep.upper) == pytest.approx((1.0, 1.0, 1.0), abs=1e-8)
    assert json.loads(rep.to_json())["upper"] == pytest.approx(1.0)


@pytest.mark.parametrize("name, params, ell", CASES)
def test_sandwich_and_saturation(name, params, ell):
    ctx = ctx_for(name, params, ell)
    for gn in ("square", "atan"):
        rep = variance_sandwich(ctx, gn, check_boundary=False)
        assert rep.consistent, (gn, rep)
    g = named_function("neg_identity").affine(2.0, 1.0)
    rep = variance_sandwich(ctx, g, check_boundary=False)
    assert rep.lower == pytest.approx(rep.center, rel=1e-8)
    assert rep.upper == pytest.approx(rep.center, rel=1e-8)


@given(st.lists(st.floats(-2, 2), min_size=2, max_size=4))
@settings(max_examples=25, deadline=None)
def test_sandwich_holds_for_random_polynomials(coeffs):
    ctx = ctx_for("binomial", [9, 0.3], 1)
    rep = variance_sandwich(ctx, polynomial(coeffs), check_boundary=False)
    assert rep.consistent


def test_sandwich_with_nonlinear_weight():
    ctx = ctx_for("normal", [0, 1])
    h = RealFn(lambda x: -x - 0.3 * np.tanh(x), lambda x: -1 - 0.3 / np.cosh(x) ** 2, "h")
    rep = variance_sandwich(ctx, "square", h)
    assert rep.weight_provenance == "numeric" and rep.consistent


def test_weight_requires_decreasing_h(normal_ctx):
    with pytest.raises(NotDecreasing):
        WeightFn(normal_ctx, "identity")
    with pytest.raises(NotDecreasing):
        variance_sandwich(normal_ctx, "square", "sin")


def test_hermite_weight_is_constant(normal_ctx):
    x = np.linspace(-3, 3, 12)
    he2 = named_function("hermite2")
    assert np.allclose(klaassen_weight(normal_ctx, he2, x), 0.5, atol=1e-9)


@pytest.mark.parametrize("name, params, ell", CASES)
def test_covariance_upper_bound(name, params, ell):
    ctx = ctx_for(name, params, ell)
    f, g = named_function("atan"), named_function("square")
    assert abs(cov_exact(ctx, f, g)) <= upper_klaassen_cov(ctx, f, g) * (1 + 1e-9)


def test_brascamp_lieb():
    ctx = ctx_for("normal", [0, 2.0])
    # Gaussian: upper = sigma^2 E[(2x)^2] = 4 sigma^4
    assert brascamp_lieb_upper(ctx, "square") == pytest.approx(16.0, rel=1e-9)
    al, be = 3.0, 1.5
    g = ctx_for("gamma", [al, be])
    # -score' = (al - 1) / x^2, so the bound for g = x is E[X^2] / (al - 1)
    exact = stats.gamma(al, scale=be).moment(2) / (al - 1)
    assert brascamp_lieb_upper(g, "identity") == pytest.approx(exact, rel=1e-9)
    assert g.dist.variance <= exact
    with pytest.raises(NotLogConcave):
        brascamp_lieb_upper(ctx_for("student", [3.0]), "identity")


def test_asymmetric_brascamp_lieb(normal_ctx):
    f, g = named_function("identity"), named_function("atan")
    bound = asymmetric_bl_bound(normal_ctx, f, g)
    # equality case: Cov[X, atan X] = E[atan'(X)] under the Gaussian
    assert abs(cov_exact(normal_ctx, f, g)) <= bound * (1 + 1e-12)
    assert asymmetric_bl_bound(normal_ctx, "identity", "identity") == pytest.approx(1.0, rel=1e-12)
    assert asymmetric_bl_bound(normal_ctx, "square", "identity") == math.inf


def test_lagrange_gap():
    ctx = ctx_for("normal", [0, 1])
    est, se = lagrange_gap(ctx, "square", "square", "neg_identity", 40_000, RngState(5))
    assert abs(est - 12.0) <= 4 * se
    est, se = lagrange_gap(ctx, "identity", "identity", "neg_identity", 1000, RngState(5))
    assert est == pytest.approx(0.0, abs=1e-12)


def test_mills_ratio_and_envelope():
    x = np.linspace(0, 10, 200)
    assert np.allclose(mills_ratio(x), stats.norm.sf(x) / stats.norm.pdf(x), rtol=1e-12)
    r = gaussian_kernel_ratio(x)
    lo, hi = mills_envelope(x)
    assert np.all(lo <= r) and np.all(r <= hi)
    assert gaussian_kernel_ratio(0.0) == pytest.approx(0.5 * SQRT_HALF_PI, abs=1e-15)


def test_gaussian_sup_factor():
    for name in ("sin", "tanh", "cos"):
        lf, bound = gaussian_sup_factor(named_function(name))
        assert lf <= bound


def test_stein_factors(normal_ctx):
    x = normal_ctx.grid(128)
    assert uniform_stein_factor(normal_ctx, "atan", grid=x) <= SQRT_HALF_PI * math.pi / 2 * 2
    ctx = ctx_for("poisson", [3.0], 1)
    xs = np.arange(0, 15, dtype=float)
    f = named_function("atan")
    from steincov import inverse_apply
    lf = np.abs(np.asarray(inverse_apply(ctx, f, xs)))
    assert np.all(lf <= np.asarray(nonuniform_factor_bound(ctx, f, xs, f_sup=math.pi / 2)) * (1 + 1e-12))


@pytest.mark.parametrize("name, params, ell", [c for c in CASES if c[0] != "logistic"]
                         + [("student", (5.0,), 0), ("fdist", (5.0, 9.0), 0)])
def test_table_rows_equal_generic_bounds(name, params, ell):
    ctx = ctx_for(name, params, ell)
    for gn in ("identity", "square", "atan"):
        if name in ("student", "fdist") and gn == "square":
            continue
        tab = table_bounds(ctx, gn)
        rep = variance_sandwich(ctx, gn, check_boundary=False)
        assert tab["lower"] == pytest.approx(rep.lower, rel=1e-8, abs=1e-12)
        assert tab["upper"] == pytest.approx(rep.upper, rel=1e-8)


def test_table_row_preconditions():
    assert table_bounds(ctx_for("logistic", [0, 1]), "identity") is None
    with pytest.raises(InvalidParameter):
        table_bounds(ctx_for("student", [2.0]), "identity")


def test_binomial_spectrum_and_weights():
    ctx = ctx_for("binomial", [5, 0.3], 1)
    ea = eigen_weight_analysis(ctx)
    # oracle: eigenvalues of the matrix built from the pmf ratio directly
    n, th = 5, 0.3
    p = stats.binom(n, th).pmf
    M = np.zeros((6, 6))
    for j in range(6):
        e = lambda x: float(min(max(x, 0), n) == j)
        dh = lambda x: e(x) - e(x - 1)
        for i in range(6):
            M[i, j] = (dh(i + 1) * p(i + 1) - dh(i) * p(i)) / p(i)
    ref = np.sort(np.linalg.eigvals(M).real)[::-1]
    assert np.allclose(ea.eigenvalues, ref, atol=1e-10)
    assert np.allclose(selfadjoint_matrix(ctx), M, atol=1e-13)
    assert ea.eigenvalues[3] == pytest.approx(-1 / (1 - th), rel=1e-12)
    assert np.max(ea.weight_deviation) < 1e-8
    assert len(ea.table()) == 6
    f, g = polynomial([0, 1, 0.5]), polynomial([1, 0, 0, 0.2])
    assert eigen_selfadjoint_check(ctx, f, g) < 1e-12


def test_eigen_needs_finite_support():
    with pytest.raises(InfiniteSupport):
        eigen_weight_analysis(ctx_for("poisson", [2.0], 1))
