from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from steincov import closed_form_kernel, make_family, validate
from steincov.distributions import Distribution
from steincov.errors import InvalidParameter

SCIPY = {
    ("normal", (1.0, 4.0)): stats.norm(1, 2), ("beta", (1.3, 2.4)): stats.beta(1.3, 2.4),
    ("gamma", (1.3, 2.4)): stats.gamma(1.3, scale=2.4), ("student", (3.0,)): stats.t(3),
    ("fdist", (5.0, 8.0)): stats.f(5, 8), ("logistic", (0.5, 2.0)): stats.logistic(0.5, 2.0),
    ("poisson", (2.0,)): stats.poisson(2), ("binomial", (10, 0.4)): stats.binom(10, 0.4),
    ("negbinomial", (2, 0.3)): stats.nbinom(2, 0.3), ("hypergeom", (5, 4, 10)): stats.hypergeom(10, 4, 5),
}


@pytest.mark.parametrize("key", list(SCIPY))
def test_density_and_moments_against_scipy(key):
    d = make_family(*key)
    ref = SCIPY[key]
    x = np.unique(ref.ppf(np.linspace(0.02, 0.98, 15)))
    dens = ref.pmf(x) if d.is_discrete else ref.pdf(x)
    assert np.allclose(d.pdf(x), dens, rtol=1e-11, atol=0)
    assert d.mean == pytest.approx(ref.mean(), rel=1e-12)
    assert d.variance == pytest.approx(ref.var(), rel=1e-10)
    assert validate(d).ok


def test_neghypergeom_exact_mass_and_moments():
    d = make_family("neghypergeom", [10, 4, 2])
    xs = range(0, 5)
    pm = [d.exact_pmf(x) for x in xs]
    assert sum(pm) == 1
    mean = sum(x * p for x, p in zip(xs, pm))
    var = sum((x - mean) ** 2 * p for x, p in zip(xs, pm))
    assert float(mean) == pytest.approx(d.mean, rel=1e-14)
    assert float(var) == pytest.approx(d.variance, rel=1e-14)


def test_exact_pmf_is_rational():
    d = make_family("binomial", [3, 0.5])
    assert [d.exact_pmf(x) for x in range(4)] == [Fraction(1, 8), Fraction(3, 8), Fraction(3, 8), Fraction(1, 8)]
    assert validate(d, 0).ok


@pytest.mark.parametrize("name, params", [
    ("normal", [0, -1]), ("binomial", [3.5, 0.5]), ("poisson", [0]), ("beta", [1]), ("nope", [1]),
])
def test_invalid_parameters(name, params):
    with pytest.raises(InvalidParameter):
        make_family(name, params)


@pytest.mark.parametrize("key", list(SCIPY))
def test_tabulated_kernel_has_mean_equal_to_variance(key):
    d = make_family(*key)
    for ell in ([-1, 1] if d.is_discrete else [0]):
        tau = closed_form_kernel(d, ell)
        if tau is None:
            continue
        from steincov.numerics import expectation
        assert expectation(d, tau) == pytest.approx(d.variance, rel=1e-9)


def test_validate_flags_bad_mass():
    bad = Distribution.from_pdf(lambda x: 2 * np.exp(-x * x / 2) / np.sqrt(2 * np.pi), (-np.inf, np.inf))
    rep = validate(bad)
    assert not rep.ok and rep.mass_error == pytest.approx(1.0, rel=1e-8)
