import json
import math
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from scipy import stats

from conftest import ctx_for
from steincov import RealFn, make_family, named_function
from steincov.errors import InvalidParameter, NotExact
from steincov.verify import (SUITE_FAMILIES, boundary_conditions_check, endpoint_limit, exact_table_kernel,
                             invariant_suite, oracle_covariance_finite, oracle_double_form_finite,
                             oracle_inverse_finite, oracle_kernel_finite, oracle_selfadjoint_matrix,
                             oracle_spectrum_finite, scaled_monomials)


def test_exact_inverse_reproduces_binomial_kernel():
    d = make_family("binomial", [3, 0.5])
    ident = named_function("identity")
    # tau^+(x) = (1 - theta) x, tau^-(x) = theta (n - x)
    assert [-oracle_inverse_finite(d, 1, ident, x) for x in range(4)] == [Fraction(k, 2) for k in range(4)]
    assert [-oracle_inverse_finite(d, -1, ident, x) for x in range(4)] == [Fraction(3 - k, 2) for k in range(4)]
    assert exact_table_kernel(d, 1, 2) == 1


def test_exact_kernel_double_sum_is_variance():
    d = make_family("binomial", [3, 0.5])
    total = sum(oracle_kernel_finite(d, 1, x, y) for x, y in product(range(4), repeat=2))
    assert total == Fraction(3, 4)
    ident = named_function("identity")
    assert oracle_double_form_finite(d, 1, ident, ident) == Fraction(3, 4)
    assert oracle_covariance_finite(d, ident, ident) == Fraction(3, 4)


def test_exact_kernel_by_brute_force_enumeration():
    # independent enumeration over pairs of outcomes
    d = make_family("hypergeom", [5, 4, 10])
    pm = {j: d.exact_pmf(j) for j in range(5)}
    for x, y in product(range(5), repeat=2):
        e12 = sum(pm[j] for j in pm if j <= x - 1 and j <= y - 1)
        e1 = sum(pm[j] for j in pm if j <= x - 1)
        e2 = sum(pm[j] for j in pm if j <= y - 1)
        assert oracle_kernel_finite(d, 1, x, y) == e12 - e1 * e2


def test_exact_oracles_refuse_infinite_supports():
    with pytest.raises(NotExact):
        oracle_inverse_finite(make_family("poisson", [2]), 1, named_function("identity"), 1)
    with pytest.raises(InvalidParameter):
        oracle_inverse_finite(make_family("binomial", [3, 0.5]), 0, named_function("identity"), 1)


def test_exact_spectrum():
    d = make_family("binomial", [5, 0.3])
    eig = oracle_spectrum_finite(d, 1)
    assert eig[0] == pytest.approx(0.0, abs=1e-30)
    assert eig[3] == pytest.approx(-1 / 0.7, rel=1e-15)
    M = oracle_selfadjoint_matrix(d, 1)
    assert all(sum(row) == 0 for row in M)  # constants are in the kernel
    assert np.allclose(np.sort(np.linalg.eigvals(np.array(M, dtype=float)).real)[::-1], eig, atol=1e-12)


def test_endpoint_limit():
    ctx = ctx_for("normal", [0, 1])
    assert abs(endpoint_limit(ctx, lambda x: x * stats.norm.pdf(x), "right")) < 1e-6
    g = ctx_for("gamma", [1.0, 1.0])
    assert endpoint_limit(g, lambda x: np.exp(-x), "left") == pytest.approx(1.0, abs=1e-9)
    b = ctx_for("binomial", [4, 0.5], 1)
    assert endpoint_limit(b, lambda x: x + 1.0, "right") == 5.0
    with pytest.raises(InvalidParameter):
        endpoint_limit(ctx, np.exp, "middle")


def test_boundary_checker_counterexample():
    n, th = 6, 0.4
    ctx = ctx_for("binomial", [n, th], -1)
    rep = boundary_conditions_check(ctx, "one", "identity")
    # residual of the first identity is f(n) p(n) g(n + 1)
    expected = stats.binom(n, th).pmf(n) * (n + 1)
    assert rep.ibp_v1["verdict"] == "fail"
    assert rep.ibp_v1["residual"] == pytest.approx(expected, rel=1e-10)
    assert rep.boundary_products["right"] == pytest.approx(expected, rel=1e-12)
    assert not rep.ok and "v1 fail" in rep.summary()
    assert json.dumps(rep.as_dict())


@pytest.mark.parametrize("name, params, ell", [("normal", (0.0, 1.0), 0), ("gamma", (2.0, 1.0), 0),
                                               ("poisson", (2.0,), 1), ("binomial", (6, 0.4), -1)])
def test_boundary_checker_in_class(name, params, ell):
    from steincov import stein_kernel
    ctx = ctx_for(name, params, ell)
    tau = stein_kernel(ctx)
    for g in ("one", "identity", "square"):
        rep = boundary_conditions_check(ctx, tau, g)
        assert rep.ok, rep.summary()
        assert rep.ibp_v1["residual"] <= 1e-7 and rep.ibp_v2["residual"] <= 1e-7


def test_scaled_monomials_span_polynomials():
    d = make_family("binomial", [5, 0.3])
    basis = scaled_monomials(d, 5)
    x = np.arange(6.0)
    V = np.array([b(x) for b in basis])
    assert np.linalg.matrix_rank(V) == 6
    assert np.max(np.abs(V)) == 1.0


def test_suite_is_deterministic_and_scoped():
    a = invariant_suite(["binomial"], seed=3)
    b = invariant_suite([("binomial", (3, 0.5))], seed=3)
    c = invariant_suite([make_family("binomial", [3, 0.5])], seed=3)
    assert a.passed and b.passed
    sub = [x for x in a.to_dict()["cases"] if x["case"].startswith("binomial(3.0,0.5)")]
    assert sub == b.to_dict()["cases"] == c.to_dict()["cases"]
    assert invariant_suite(["binomial"], seed=3).to_json() == a.to_json()
    with pytest.raises(InvalidParameter):
        invariant_suite(["nope"])


def test_suite_skips_downstream_of_invalid_law():
    from steincov import Distribution
    bad = Distribution.from_pdf(lambda x: 2 * np.exp(-x * x / 2) / math.sqrt(2 * math.pi), (-np.inf, np.inf),
                                name="bad")
    rep = invariant_suite([bad])
    verdicts = {c.case.split("/")[-1]: c.verdict for c in rep.cases}
    assert verdicts["validate"] == "fail" and verdicts["downstream"] == "skip"
    assert not rep.passed


def test_suite_family_list_covers_all_tables():
    names = {n for n, _ in SUITE_FAMILIES}
    assert names >= {"poisson", "binomial", "negbinomial", "hypergeom", "neghypergeom", "normal", "beta",
                     "gamma", "student", "fdist"}
