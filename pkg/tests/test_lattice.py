import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from steincov.errors import InvalidRange, NonFiniteValue, NonLatticePoint
from steincov.lattice import (LatticeKind, RealFn, as_realfn, chi, constant, delta, function_names,
                              named_function, polynomial, prob_integrate, shifts)


def test_shift_constants():
    assert shifts(1) == (1, 0)
    assert shifts(-1) == (0, 1)
    assert shifts(0) == (0, 0)
    assert LatticeKind.parse("+1") == LatticeKind.FORWARD
    assert LatticeKind.parse("backward") == LatticeKind.BACKWARD
    assert -LatticeKind.FORWARD == LatticeKind.BACKWARD


def test_discrete_difference_matches_definition():
    f = named_function("cube")
    x = np.arange(-3, 4, dtype=float)
    assert np.array_equal(delta(1, f, x), (x + 1) ** 3 - x ** 3)
    assert np.array_equal(delta(-1, f, x), x ** 3 - (x - 1) ** 3)


def test_discrete_difference_rejects_non_lattice_points():
    with pytest.raises(NonLatticePoint):
        delta(1, "identity", 0.5)


def test_non_finite_values_are_reported():
    f = RealFn(lambda x: 1.0 / x)
    with pytest.raises(NonFiniteValue):
        delta(1, f, np.array([-1.0]))


def test_analytic_derivative_is_used():
    assert delta(0, "sin", 0.3) == math.cos(0.3)


@given(st.floats(-20, 20))
@settings(max_examples=200, deadline=None)
def test_finite_difference_fallback_accuracy(x):
    f = RealFn(lambda t: np.sin(t) * np.exp(-0.01 * t * t))  # no derivative supplied
    exact = math.cos(x) * math.exp(-0.01 * x * x) - 0.02 * x * math.sin(x) * math.exp(-0.01 * x * x)
    assert abs(delta(0, f, x) - exact) <= 1e-11 * (1 + abs(x))


def test_finite_difference_stays_inside_support():
    seen = []

    def f(t):
        seen.append(np.min(t))
        return np.sqrt(t)
    d = delta(0, RealFn(f), 1e-3, support=(0.0, math.inf))
    assert min(seen) > 0
    assert d == pytest.approx(0.5 / math.sqrt(1e-3), rel=1e-4)  # stencil shrinks to x/4 here


@given(st.integers(-50, 50), st.integers(-50, 50))
def test_chi_is_shifted_indicator(x, y):
    assert chi(1, x, y) == int(x <= y - 1)
    assert chi(-1, x, y) == int(x <= y)
    assert chi(0, x, y) == int(x <= y)


@given(st.integers(-30, 30), st.integers(0, 30), st.sampled_from([-1, 1]))
def test_prob_integrate_telescopes(x1, span, ell):
    f = polynomial([1.0, -2.0, 0.5, 0.25])
    x2 = x1 + span
    df = RealFn(lambda x: delta(-ell, f, x))
    assert prob_integrate(ell, df, x1, x2) == pytest.approx(f(x2) - f(x1), rel=1e-12, abs=1e-9)


def test_prob_integrate_continuous():
    assert prob_integrate(0, "cos", 0.0, 1.0) == pytest.approx(math.sin(1.0), rel=1e-12)
    with pytest.raises(InvalidRange):
        prob_integrate(0, "cos", 1.0, 0.0)


def test_function_battery_derivatives_agree_with_differences():
    x = np.linspace(-2, 2, 11)
    for name in function_names():
        f = named_function(name)
        fd = delta(0, RealFn(f.fn), x)
        assert np.allclose(f.derivative(x), fd, rtol=1e-9, atol=1e-9), name


def test_realfn_helpers():
    assert as_realfn(2.0)(3.0) == 2.0
    assert as_realfn("x^2")(3.0) == 9.0
    g = named_function("identity").affine(2.0, 1.0)
    assert g(3.0) == 7.0 and g.derivative(3.0) == 2.0
    assert (-named_function("square"))(2.0) == -4.0
    assert constant(1.5)(np.zeros(3)).tolist() == [1.5] * 3
