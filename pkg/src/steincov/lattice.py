"""Difference/derivative calculus indexed by a lattice kind.

A lattice kind ``ell`` is one of -1 (backward difference), 0 (derivative)
or +1 (forward difference).  Everything in the package is written once in
terms of ``ell``:

    delta(ell, f, x)  =  f'(x)                      if ell == 0
                         (f(x + ell) - f(x)) / ell  otherwise

together with the shift constants ``a = 1[ell == +1]``, ``b = 1[ell == -1]``
and the generalized indicator ``chi(ell, x, y) = 1[x <= y - a]``.
"""
from __future__ import annotations

import math
from enum import IntEnum
from typing import Callable, Optional

import numpy as np

from .errors import InvalidRange, NonFiniteValue, NonLatticePoint

# sixth-order (Richardson-combined) central stencil; eps^(1/7) balances truncation and roundoff
FD_STEP = float(np.finfo(float).eps ** (1.0 / 7.0))


class LatticeKind(IntEnum):
    BACKWARD = -1
    CONTINUOUS = 0
    FORWARD = 1

    def shifts(self) -> tuple[int, int]:
        """Return (a_ell, b_ell)."""
        return int(self == LatticeKind.FORWARD), int(self == LatticeKind.BACKWARD)

    def __neg__(self) -> "LatticeKind":
        return LatticeKind(-int(self))

    @property
    def discrete(self) -> bool:
        return self != LatticeKind.CONTINUOUS

    @classmethod
    def parse(cls, value) -> "LatticeKind":
        if isinstance(value, LatticeKind):
            return value
        if isinstance(value, str):
            key = value.strip().lower()
            names = {"backward": -1, "-": -1, "continuous": 0, "forward": 1, "+": 1}
            if key in names:
                return cls(names[key])
            value = int(key)
        return cls(int(value))


def shifts(ell) -> tuple[int, int]:
    return LatticeKind.parse(ell).shifts()


class RealFn:
    """A vectorised real function of one real variable.

    ``derivative`` is an optional analytic derivative; it is only consulted
    for ell = 0.  For ell = +-1 the exact difference quotient is always used.
    """

    def __init__(self, fn: Callable, derivative: Optional[Callable] = None, name: str = ""):
        if isinstance(fn, RealFn):
            derivative = derivative or fn.derivative
            name = name or fn.name
            fn = fn.fn
        self.fn = fn
        self.derivative = derivative
        self.name = name or getattr(fn, "__name__", "f")

    def __call__(self, x):
        x_arr = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            try:
                out = np.asarray(self.fn(x_arr), dtype=float)
                if out.shape != x_arr.shape:
                    out = np.broadcast_to(out, x_arr.shape).astype(float)
            except (TypeError, ValueError):
                out = np.vectorize(lambda t: float(self.fn(float(t))), otypes=[float])(x_arr)
        if out.ndim == 0:
            return float(out)
        return out

    def __repr__(self):
        return f"RealFn({self.name})"

    def affine(self, alpha: float, beta: float = 0.0) -> "RealFn":
        """x -> alpha * f(x) + beta."""
        fn, der = self.fn, self.derivative
        d = None if der is None else (lambda x: alpha * np.asarray(der(x), dtype=float))
        return RealFn(lambda x: alpha * np.asarray(fn(x), dtype=float) + beta, d,
                      f"{alpha!r}*{self.name}+{beta!r}")

    def __neg__(self):
        return self.affine(-1.0, 0.0)


def as_realfn(f) -> RealFn:
    if isinstance(f, RealFn):
        return f
    if isinstance(f, str):
        return named_function(f)
    if np.isscalar(f):
        return constant(float(f))
    return RealFn(f)


def _check_finite(values, where):
    v = np.asarray(values)
    if not np.all(np.isfinite(v)):
        bad = np.atleast_1d(where)[np.flatnonzero(~np.isfinite(np.atleast_1d(v)))[:1]]
        raise NonFiniteValue(f"non-finite function value at x = {bad[0]!r}")


def check_lattice(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or not np.all(x == np.round(x)):
        raise NonLatticePoint("lattice points must be integers")
    return x


def fd_step(x, support=None) -> np.ndarray:
    """Stencil step FD_STEP*max(1,|x|), shrunk so x +- 2h stays inside finite support ends."""
    x = np.asarray(x, dtype=float)
    h = FD_STEP * np.maximum(1.0, np.abs(x))
    if support is not None:
        lo, hi = support
        with np.errstate(invalid="ignore"):
            if np.isfinite(lo):
                h = np.where(x - 2 * h <= lo, np.maximum(0.25 * (x - lo), 0.0), h)
            if np.isfinite(hi):
                h = np.where(x + 2 * h >= hi, np.minimum(h, 0.25 * (hi - x)), h)
        h = np.where(h > 0, h, FD_STEP * np.maximum(1.0, np.abs(x)))
    return h


def delta(ell, f, x, support=None):
    """Delta^ell f at x (vectorised over x)."""
    ell = LatticeKind.parse(ell)
    f = as_realfn(f)
    x_arr = np.asarray(x, dtype=float)
    if ell != LatticeKind.CONTINUOUS:
        check_lattice(x_arr)
        up, here = f(x_arr + int(ell)), f(x_arr)
        _check_finite(up, x_arr + int(ell))
        _check_finite(here, x_arr)
        out = (np.asarray(up) - np.asarray(here)) / int(ell)
    elif f.derivative is not None:
        out = np.asarray(f.derivative(x_arr), dtype=float)
        _check_finite(out, x_arr)
    else:
        h = fd_step(x_arr, support)
        flat_x, flat_h = np.atleast_1d(x_arr).ravel(), np.atleast_1d(h).ravel()
        # five-point stencils at h and h/2, combined by one Richardson step
        ks = (-2.0, -1.0, -0.5, 0.5, 1.0, 2.0)
        nodes = np.concatenate([flat_x + k * flat_h for k in ks])
        vals = np.asarray(f(nodes), dtype=float)
        _check_finite(vals, nodes)
        m2, m1, mh, ph, p1, p2 = vals.reshape(len(ks), -1)
        d_h = (m2 - p2 + 8.0 * (p1 - m1)) / (12.0 * flat_h)
        d_half = (m1 - p1 + 8.0 * (ph - mh)) / (6.0 * flat_h)
        out = ((16.0 * d_half - d_h) / 15.0).reshape(x_arr.shape)
    if np.ndim(out) == 0:
        return float(out)
    return out


def chi(ell, x, y):
    """Generalized indicator 1[x <= y - a_ell]."""
    a, _ = shifts(ell)
    out = (np.asarray(x, dtype=float) <= np.asarray(y, dtype=float) - a).astype(int)
    return int(out) if out.ndim == 0 else out


def prob_integrate(ell, df, x1, x2, tol=None) -> float:
    """Re-accumulate a Delta^{-ell} image between x1 and x2.

    ell = 0: integral over [x1, x2]; ell = -1: sum over j = x1..x2-1;
    ell = +1: sum over j = x1+1..x2.  When df = Delta^{-ell} f the result
    telescopes to f(x2) - f(x1).
    """
    ell = LatticeKind.parse(ell)
    if x1 > x2:
        raise InvalidRange(f"x1={x1!r} exceeds x2={x2!r}")
    df = as_realfn(df)
    if ell == LatticeKind.CONTINUOUS:
        from .numerics import integrate_interval
        return integrate_interval(df, x1, x2, tol)
    check_lattice([x1, x2])
    lo, hi = (int(x1), int(x2) - 1) if ell == LatticeKind.BACKWARD else (int(x1) + 1, int(x2))
    if hi < lo:
        return 0.0
    vals = np.atleast_1d(df(np.arange(lo, hi + 1, dtype=float)))
    _check_finite(vals, np.arange(lo, hi + 1))
    return math.fsum(vals.tolist())


# a battery of named test functions with analytic derivatives

def constant(c: float) -> RealFn:
    return RealFn(lambda x: np.full(np.shape(x), c, dtype=float),
                  lambda x: np.zeros(np.shape(x)), f"const({c!r})")


def polynomial(coeffs) -> RealFn:
    """Polynomial with coefficients in increasing degree."""
    c = np.asarray(coeffs, dtype=float)
    dc = np.polynomial.polynomial.polyder(c) if c.size > 1 else np.zeros(1)
    return RealFn(lambda x: np.polynomial.polynomial.polyval(x, c),
                  lambda x: np.polynomial.polynomial.polyval(x, dc) + 0.0 * np.asarray(x),
                  f"poly{tuple(c.tolist())}")


_FUNCTIONS = {
    "identity": (lambda x: x + 0.0, lambda x: np.ones(np.shape(x))),
    "neg_identity": (lambda x: -x + 0.0, lambda x: -np.ones(np.shape(x))),
    "square": (lambda x: x * x, lambda x: 2.0 * x),
    "cube": (lambda x: x ** 3, lambda x: 3.0 * x * x),
    "exp_neg": (lambda x: np.exp(-x), lambda x: -np.exp(-x)),
    "sin": (np.sin, np.cos),
    "cos": (np.cos, lambda x: -np.sin(x)),
    "atan": (np.arctan, lambda x: 1.0 / (1.0 + x * x)),
    "tanh": (np.tanh, lambda x: 1.0 / np.cosh(x) ** 2),
    "hermite2": (lambda x: x * x - 1.0, lambda x: 2.0 * x),
    "one": (lambda x: np.ones(np.shape(x)), lambda x: np.zeros(np.shape(x))),
}
_ALIASES = {"id": "identity", "x": "identity", "-id": "neg_identity", "-x": "neg_identity",
            "x2": "square", "x^2": "square", "x3": "cube", "exp(-x)": "exp_neg",
            "he2": "hermite2"}


def named_function(name: str) -> RealFn:
    key = _ALIASES.get(name.strip().lower(), name.strip().lower())
    if key not in _FUNCTIONS:
        raise KeyError(f"unknown function {name!r}; known: {sorted(_FUNCTIONS)}")
    fn, der = _FUNCTIONS[key]
    return RealFn(fn, der, key)


def function_names() -> list[str]:
    return sorted(_FUNCTIONS)
