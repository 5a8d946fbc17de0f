"""Covariance identities and the variance bounds built on Stein operators.

Everything is expressed through the pseudo-inverse L, the Hoeffding kernel K
and the lattice difference Delta^{-ell}:

    Cov[f, g]   = E[-L f  Delta^{-ell} g]                       (single form)
                = E[Delta^{-ell} f(X) K(X, X') / (p p') Delta^{-ell} g(X')]   (double form)
    lower       = E[f Delta^{-ell} g]^2 / E[(T f)^2]
    upper       = E[(Delta^{-ell} g)^2 w],   w = -L h / Delta^{-ell} h,  h decreasing

With h = -Id the weight is the Stein kernel tau.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import special as sc

from .distributions import Distribution, make_family
from .errors import (BoundaryViolation, InfiniteSupport, InvalidParameter, NoConvergence,
                     NonFiniteValue, NotDecreasing, NotIntegrable, ZeroDenominator)
from .lattice import LatticeKind, RealFn, as_realfn, delta, named_function
from .numerics import Tolerance, expectation, integrate_interval, quantile_grid, weighted_eigensystem
from .stein_core import (SteinContext, _check_log_concave, canonical_apply, clamp_to_support,
                         inverse_apply, k_kernel, kernel_transform, lower_mass, score_slope,
                         selfadjoint_apply, stein_kernel, stein_solution, upper_mass)

# expectations feeding bounds: tight enough that the 1e-9 sandwich slack is meaningful
BOUND_TOL = Tolerance(abs=1e-13, rel=1e-12, max_subdiv=4000, tail_tol=1e-16)
SANDWICH_SLACK = 1e-9


def _expect(ctx: SteinContext, fn, tol: Optional[Tolerance] = None) -> float:
    """E[fn] at BOUND_TOL, falling back to the context tolerance (e.g. oscillatory heavy tails)."""
    fn = as_realfn(fn)
    try:
        return expectation(ctx.dist, fn, tol or BOUND_TOL)
    except NoConvergence:
        pass
    except NonFiniteValue as exc:
        raise NotIntegrable(str(exc)) from exc
    try:
        return expectation(ctx.dist, fn, ctx.tol)
    except (NoConvergence, NonFiniteValue) as exc:
        raise NotIntegrable(str(exc)) from exc


def _diff(ctx: SteinContext, f) -> RealFn:
    """x -> Delta^{-ell} f(x)."""
    f = as_realfn(f)
    minus, support = -ctx.ell, ctx.dist.support
    return RealFn(lambda x: delta(minus, f, x, support), None, f"D[{f.name}]")


def _product(*fns) -> RealFn:
    fns = [as_realfn(f) for f in fns]

    def fn(x):
        out = np.ones(np.shape(x))
        for f in fns:
            out = out * np.asarray(f(x), dtype=float)
        return out
    return RealFn(fn, None, "*".join(f.name for f in fns))


@dataclass
class BoundReport:
    lower: float
    center: float
    upper: float
    weight_provenance: str
    boundary_status: str
    tolerances_achieved: dict = field(default_factory=dict)

    @property
    def slack(self) -> float:
        return SANDWICH_SLACK * (1.0 + abs(self.center))

    @property
    def consistent(self) -> bool:
        return self.lower <= self.center + self.slack and self.center <= self.upper + self.slack

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=repr)


# ---------------------------------------------------------------- covariance

def cov_exact(ctx: SteinContext, f, g) -> float:
    """E[(f - E f)(g - E g)]."""
    f, g = as_realfn(f), as_realfn(g)
    ef, eg = _expect(ctx, f), _expect(ctx, g)
    return _expect(ctx, RealFn(lambda x: (np.asarray(f(x)) - ef) * (np.asarray(g(x)) - eg)))


def _double_form(ctx: SteinContext, f, g) -> float:
    d = ctx.dist
    f, g = as_realfn(f), as_realfn(g)
    df, dg = _diff(ctx, f), _diff(ctx, g)
    if d.is_discrete:
        lo, hi = d.effective_range()
        xs = np.arange(lo, hi + 1, dtype=float)
        kmat = k_kernel(ctx, xs[:, None], xs[None, :])
        terms = np.where(kmat > 0, np.asarray(df(xs))[:, None] * kmat * np.asarray(dg(xs))[None, :], 0.0)
        return math.fsum(terms.ravel().tolist())
    # nested: outer over u of Delta f(u) * inner(u), inner(u) = int K(u, v) Delta g(v) dv
    inner_tol = Tolerance(abs=1e-13, rel=1e-11, max_subdiv=4000)

    def outer(u):
        u = np.asarray(u, dtype=float)
        vals = np.asarray(df(u), dtype=float)
        keep = (vals != 0) & ctx.interior(u)
        out = np.zeros(u.shape)
        if np.any(keep):
            out[keep] = vals[keep] * np.atleast_1d(kernel_transform(ctx, g, u[keep]))
        return out
    a, b = d.support
    return integrate_interval(RealFn(outer), a, b, inner_tol, points=d.breakpoints(), scale=d.scale)


def cov_identity_rhs(ctx: SteinContext, f, g, form: str = "single", strict: bool = False) -> float:
    """Right-hand side of the covariance identity, single or double (kernel) form."""
    f, g = as_realfn(f), as_realfn(g)
    if strict:
        from .verify import boundary_conditions_check
        rep = boundary_conditions_check(ctx, f, g)
        if not rep.ok:
            raise BoundaryViolation(f"boundary conditions fail for ({f.name}, {g.name}): {rep.summary()}")
    if form == "single":
        dg = _diff(ctx, g)
        return _expect(ctx, RealFn(lambda x: -np.asarray(inverse_apply(ctx, f, x)) * np.asarray(dg(x))))
    if form == "double":
        return _double_form(ctx, f, g)
    raise InvalidParameter(f"form must be 'single' or 'double', got {form!r}")


# ---------------------------------------------------------------- lower bound

def lower_cramer_rao(ctx: SteinContext, g, f) -> float:
    """E[f Delta^{-ell} g]^2 / E[(T f)^2]."""
    f, g = as_realfn(f), as_realfn(g)
    num = _expect(ctx, _product(f, _diff(ctx, g))) ** 2
    den = _expect(ctx, RealFn(lambda x: np.asarray(canonical_apply(ctx, f, x)) ** 2))
    if den == 0:
        raise ZeroDenominator(f"E[(T {f.name})^2] vanishes")
    return num / den


# ---------------------------------------------------------------- weights

def klaassen_weight(ctx: SteinContext, h, x):
    """-L h(x) / Delta^{-ell} h(x); nan where the denominator vanishes."""
    h = as_realfn(h)
    x = np.asarray(x, dtype=float)
    num = -np.asarray(inverse_apply(ctx, h, x), dtype=float)
    den = np.asarray(_diff(ctx, h)(x), dtype=float)
    with np.errstate(all="ignore"):
        out = np.where(den != 0, num / np.where(den != 0, den, 1.0), np.nan)
    return float(out) if np.ndim(out) == 0 else out


class WeightFn:
    """The weight x -> -L h(x) / Delta^{-ell} h(x) attached to a decreasing h.

    For h = -Id the weight is the Stein kernel and the tabulated closed form
    is used when the family has one.
    """

    def __init__(self, ctx: SteinContext, h=None, check_points=None):
        self.ctx = ctx
        self.h = as_realfn(h if h is not None else "neg_identity")
        pts = ctx.grid(256) if check_points is None else np.asarray(check_points, dtype=float)
        pts = pts[ctx.inside(pts)] if ctx.dist.is_discrete else pts[ctx.interior(pts)]
        dh = np.asarray(_diff(ctx, self.h)(pts), dtype=float)
        if np.any(~(dh < 0)):
            w = float(pts[~(dh < 0)][0])
            raise NotDecreasing(f"{self.h.name} is not decreasing at x = {w!r}", w)
        self._tau = None
        if self.h.name == "neg_identity":
            tau = stein_kernel(ctx)
            if tau.provenance == "closed-form":
                self._tau = tau
        self.provenance = "closed-form" if self._tau is not None else "numeric"
        w = np.asarray(self(pts), dtype=float)
        self.violations = [float(v) for v in pts[~(w >= 0)]]

    def __call__(self, x):
        if self._tau is not None:
            return self._tau(x)
        return klaassen_weight(self.ctx, self.h, x)

    def as_realfn(self) -> RealFn:
        return RealFn(self.__call__, None, f"w[{self.h.name}]")


def upper_klaassen_cov(ctx: SteinContext, f, g, w: Optional[WeightFn] = None) -> float:
    """sqrt(E[(Delta f)^2 w]) * sqrt(E[(Delta g)^2 w])."""
    w = w or WeightFn(ctx)
    wf = w.as_realfn()
    df, dg = _diff(ctx, f), _diff(ctx, g)
    a = _expect(ctx, _product(df, df, wf))
    if as_realfn(f) is as_realfn(g):
        return a
    b = _expect(ctx, _product(dg, dg, wf))
    return math.sqrt(max(a, 0.0)) * math.sqrt(max(b, 0.0))


def _boundary_status(ctx, f, g, strict) -> str:
    from .verify import boundary_conditions_check
    rep = boundary_conditions_check(ctx, f, g)
    if rep.ibp_v2["verdict"] == "pass":
        return "pass"
    msg = f"warn: covariance identity residual {rep.ibp_v2['residual']:.3g}"
    if strict:
        raise BoundaryViolation(msg)
    return msg


def variance_sandwich(ctx: SteinContext, g, h=None, strict: bool = False,
                      check_boundary: bool = True) -> BoundReport:
    """lower <= Var[g] <= upper with the weight of a decreasing h (default -Id)."""
    g = as_realfn(g)
    w = WeightFn(ctx, h)
    h = w.h
    dg = _diff(ctx, g)
    var_h = cov_exact(ctx, h, h)
    if var_h == 0:
        raise ZeroDenominator(f"Var[{h.name}] vanishes")
    if w.provenance == "closed-form":
        # -L(-Id) = -tau
        mlh = RealFn(lambda x: -np.asarray(w(x)))
    else:
        mlh = RealFn(lambda x: -np.asarray(inverse_apply(ctx, h, x)))
    lower = _expect(ctx, _product(mlh, dg)) ** 2 / var_h
    upper = _expect(ctx, _product(dg, dg, w.as_realfn()))
    center = cov_exact(ctx, g, g)
    status = _boundary_status(ctx, h, g, strict) if check_boundary else "unchecked"
    if w.violations:
        status = f"warn: negative weight at {len(w.violations)} points"
    return BoundReport(lower, center, upper, w.provenance, status, BOUND_TOL.as_dict())


# ---------------------------------------------------------------- Brascamp-Lieb

def brascamp_lieb_upper(ctx: SteinContext, g) -> float:
    """E[(Delta g)^2 / (-Delta^{-ell} score)] for a strictly log-concave law."""
    _check_log_concave(ctx)
    dg = _diff(ctx, g)

    def fn(x):
        curv = -np.asarray(score_slope(ctx, x), dtype=float)
        with np.errstate(all="ignore"):
            return np.where(curv > 0, np.asarray(dg(x)) ** 2 / np.where(curv > 0, curv, 1.0), 0.0)
    return _expect(ctx, RealFn(fn))


def _grid_sup(ctx, fn, lo, hi, n=512):
    pts = quantile_grid(ctx.dist, lo, hi, n)
    pts = pts[ctx.inside(pts)] if ctx.dist.is_discrete else pts[ctx.interior(pts)]
    return float(np.max(np.abs(np.asarray(fn(pts), dtype=float))))


def asymmetric_bl_bound(ctx: SteinContext, f, g) -> float:
    """grid-sup |Delta f / Delta score| * E[|Delta g|].

    The sup is taken over the quantile grid; if widening the grid to
    quantiles 1e-12 keeps increasing it the sup is reported as +inf.
    """
    _check_log_concave(ctx)
    df, dg = _diff(ctx, f), _diff(ctx, g)

    def ratio(x):
        s = np.asarray(score_slope(ctx, x), dtype=float)
        with np.errstate(all="ignore"):
            return np.asarray(df(x)) / s
    sup = _grid_sup(ctx, ratio, 1e-6, 1 - 1e-6)
    wide = _grid_sup(ctx, ratio, 1e-12, 1 - 1e-12)
    if not np.isfinite(wide) or wide > sup * (1 + 1e-6) + 1e-12:
        return math.inf
    return sup * _expect(ctx, RealFn(lambda x: np.abs(np.asarray(dg(x)))))


# ---------------------------------------------------------------- Lagrange remainder

def lagrange_gap(ctx: SteinContext, f, g, h, n: int, rng):
    """Monte Carlo estimate of R(f, g, h) / 2 with its standard error.

    With w the weight of h, R/2 equals E[(Df)^2 w] E[(Dg)^2 w] - Cov[f, g]^2.
    R = E[(F12 G34 - F34 G12)^2] where
    F(x, y) = Df(x) / sqrt(-Dh(x)) * sqrt(-K(x, y) Dh(y) / (p(x) p(y))) and G
    the same with the roles of x, y swapped for g.
    """
    from .numerics import sample
    f, g, h = as_realfn(f), as_realfn(g), as_realfn(h)
    df, dg, dh = _diff(ctx, f), _diff(ctx, g), _diff(ctx, h)
    xs = [sample(ctx.dist, n, rng.split(k)) for k in range(1, 5)]
    cache = {}

    def parts(i):
        if i not in cache:
            x = xs[i]
            hv = np.asarray(dh(x), dtype=float)
            if np.any(~(hv < 0)):
                raise NotDecreasing(f"{h.name} is not decreasing on the sample")
            cache[i] = (x, np.asarray(df(x)), np.asarray(dg(x)), -hv, ctx.p(x))
        return cache[i]

    def pair(i, j):
        x, dfx, _, mhx, px = parts(i)
        y, _, dgy, mhy, py = parts(j)
        kv = np.asarray(k_kernel(ctx, x, y), dtype=float)
        common = np.sqrt(kv / (px * py))
        fxy = dfx / np.sqrt(mhx) * common * np.sqrt(mhy)
        gxy = dgy / np.sqrt(mhy) * common * np.sqrt(mhx)
        return fxy, gxy
    f12, _ = pair(0, 1)
    _, g12 = pair(0, 1)
    f34, _ = pair(2, 3)
    _, g34 = pair(2, 3)
    vals = 0.5 * (f12 * g34 - f34 * g12) ** 2
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(n))


# ---------------------------------------------------------------- Gaussian factors

SQRT_HALF_PI = math.sqrt(math.pi / 2)


def mills_ratio(x):
    """(1 - Phi(x)) / phi(x), stable for large x."""
    x = np.asarray(x, dtype=float)
    return SQRT_HALF_PI * sc.erfcx(x / math.sqrt(2))


def gaussian_kernel_ratio(x):
    """K(x, x) / phi(x) = Phi(x) (1 - Phi(x)) / phi(x) for the standard normal."""
    ctx = SteinContext(make_family("normal", [0, 1]), 0)
    x = np.asarray(x, dtype=float)
    val = np.asarray(k_kernel(ctx, x, x)) / ctx.p(x)
    return float(val) if np.ndim(val) == 0 else val


def mills_envelope(x):
    """(lower, upper) = (1/(sqrt(x^2+4)+x), 4/(sqrt(x^2+8)+3x)) for x >= 0."""
    x = np.asarray(x, dtype=float)
    return 1.0 / (np.sqrt(x * x + 4) + x), 4.0 / (np.sqrt(x * x + 8) + 3 * x)


def gaussian_sup_factor(f, grid=None):
    """(grid-sup |L f|, sqrt(pi/2) * grid-sup |f|) under the standard normal."""
    ctx = SteinContext(make_family("normal", [0, 1]), 0)
    pts = ctx.grid() if grid is None else np.asarray(grid, dtype=float)
    f = as_realfn(f)
    lf = np.asarray(inverse_apply(ctx, f, pts))
    return float(np.max(np.abs(lf))), SQRT_HALF_PI * float(np.max(np.abs(np.asarray(f(pts)))))


def uniform_stein_factor(ctx: SteinContext, h, eta=None, grid=None) -> float:
    """grid-sup |g_h| of the Stein solution with standardization eta (default Id)."""
    eta = as_realfn(eta if eta is not None else "identity")
    pts = ctx.grid() if grid is None else np.asarray(grid, dtype=float)
    return float(np.max(np.abs(np.asarray(stein_solution(ctx, h, eta, pts)))))


def nonuniform_factor_bound(ctx: SteinContext, f, x, f_sup: Optional[float] = None):
    """2 ||f|| P(X <= x - a_ell) P(X >= x + a_{-ell}) / p(x)."""
    f = as_realfn(f)
    x = np.asarray(x, dtype=float)
    if f_sup is None:
        f_sup = float(np.max(np.abs(np.asarray(f(ctx.grid())))))
    with np.errstate(all="ignore"):
        val = 2 * f_sup * np.asarray(lower_mass(ctx, x)) * np.asarray(upper_mass(ctx, x)) / ctx.p(x)
    return float(val) if np.ndim(val) == 0 else val


# ---------------------------------------------------------------- tabulated rows

def _table_row(d: Distribution, ell: int):
    """(lower coefficient, lower weight, upper coefficient, upper weight) of a family row.

    lower = cl * E[wl(X) Delta^{-ell} g(X)]^2, upper = cu * E[wu(X) (Delta^{-ell} g(X))^2].
    """
    P = d.params
    name = d.name
    one = lambda x: np.ones(np.shape(x))
    if name == "poisson":
        lam, = P
        return (lam, one, lam, one) if ell == -1 else (1 / lam, lambda x: x, 1.0, lambda x: x)
    if name == "binomial":
        n, th = P
        if ell == -1:
            return th / (n * (1 - th)), lambda x: n - x, th, lambda x: n - x
        return (1 - th) / (n * th), lambda x: x, 1 - th, lambda x: x
    if name == "negbinomial":
        r, p = P
        if ell == -1:
            return (1 - p) / r, lambda x: x + r, (1 - p) / p, lambda x: x + r
        return 1 / (r * (1 - p)), lambda x: x, 1 / p, lambda x: x
    if name == "hypergeom":
        n, K, N = P
        c = (N - 1) / (n * K * (N - K) * (N - n))
        if ell == -1:
            wt = lambda x: (K - x) * (n - x)
        else:
            wt = lambda x: x * (N - K - n + x)
        return c, wt, 1 / N, wt
    if name == "neghypergeom":
        N, K, r = P
        c = (N - K + 2) / (r * (N + 1) * K * (N - K - r + 1))
        if ell == -1:
            wt = lambda x: (K - x) * (r + x)
        else:
            wt = lambda x: x * (N + 1 - r - x)
        return c, wt, 1 / (N - K + 1), wt
    if name == "normal":
        _, s2 = P
        return s2, one, s2, one
    if name == "beta":
        al, be = P
        wt = lambda x: x * (1 - x)
        return (al + be + 1) / (al * be), wt, 1 / (al + be), wt
    if name == "gamma":
        al, be = P
        return 1 / al, lambda x: x, be, lambda x: x
    if name == "student":
        nu, = P
        if not nu > 2:
            raise InvalidParameter("the Student row requires nu > 2")
        wt = lambda x: x * x + nu
        return (nu - 2) / (nu * (nu - 1) ** 2), wt, 1 / (nu - 1), wt
    if name == "fdist":
        d1, d2 = P
        if not d2 > 4:
            raise InvalidParameter("the F row requires d2 > 4")
        wt = lambda x: x * (d2 + d1 * x)
        return 2 * (d2 - 4) / (d1 * d2 ** 2 * (d1 + d2 - 2)), wt, 2 / (d1 * (d2 - 2)), wt
    return None


def table_bounds(ctx: SteinContext, g) -> Optional[dict]:
    """The tabulated lower/upper variance bounds of the family, or None if untabulated."""
    row = _table_row(ctx.dist, int(ctx.ell))
    if row is None:
        return None
    cl, wl, cu, wu = row
    dg = _diff(ctx, g)
    wl_fn = RealFn(lambda x: np.asarray(wl(np.asarray(x, dtype=float)), dtype=float) * np.ones(np.shape(x)))
    wu_fn = RealFn(lambda x: np.asarray(wu(np.asarray(x, dtype=float)), dtype=float) * np.ones(np.shape(x)))
    lower = cl * _expect(ctx, _product(wl_fn, dg)) ** 2
    upper = cu * _expect(ctx, _product(wu_fn, dg, dg))
    return {"lower": lower, "center": cov_exact(ctx, g, g), "upper": upper}


# ---------------------------------------------------------------- eigen-weights

@dataclass
class EigenAnalysis:
    support: np.ndarray
    eigenvalues: np.ndarray          # descending, 0 first
    eigenvectors: np.ndarray         # columns, p-orthonormal
    weight_constants: np.ndarray     # -1/mu for the non-constant modes
    weight_deviation: np.ndarray     # max |(-L h / Delta h) - (-1/mu)| per non-constant mode
    matrix: np.ndarray

    def table(self) -> list:
        rows = []
        for k, mu in enumerate(self.eigenvalues):
            row = {"mode": k, "eigenvalue": float(mu)}
            if k > 0:
                row["weight"] = float(self.weight_constants[k - 1])
                row["weight_deviation"] = float(self.weight_deviation[k - 1])
            rows.append(row)
        return rows


def _finite_points(ctx: SteinContext) -> np.ndarray:
    d = ctx.dist
    if not (d.is_discrete and d.finite_support):
        raise InfiniteSupport("the eigensystem needs a finite discrete support")
    a, b = d.support
    return np.arange(a, b + 1, dtype=float)


def _table_fn(xs, values, name="h") -> RealFn:
    a = xs[0]
    vals = np.asarray(values, dtype=float)

    def fn(x):
        idx = np.clip(np.asarray(x, dtype=float) - a, 0, len(vals) - 1).astype(int)
        return vals[idx]
    return RealFn(fn, None, name)


def selfadjoint_matrix(ctx: SteinContext) -> np.ndarray:
    """Matrix of R h = T(Delta^{-ell} h) on a finite discrete support (columns = basis)."""
    xs = _finite_points(ctx)
    n = xs.size
    M = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        M[:, j] = selfadjoint_apply(ctx, _table_fn(xs, e), xs)
    return M


def eigen_weight_analysis(ctx: SteinContext) -> EigenAnalysis:
    """Spectrum of R and the constancy of -L h / Delta h = -1/mu on each eigenvector."""
    xs = _finite_points(ctx)
    M = selfadjoint_matrix(ctx)
    vals, vecs = weighted_eigensystem(M, ctx.p(xs))
    order = np.argsort(-vals)
    vals, vecs = vals[order], vecs[:, order]
    consts, devs = [], []
    for k in range(1, vals.size):
        mu = vals[k]
        h = _table_fn(xs, vecs[:, k], f"eig{k}")
        dh = np.asarray(_diff(ctx, clamp_to_support(ctx, h))(xs))
        use = np.abs(dh) > 1e-8 * np.max(np.abs(dh))
        w = -np.asarray(inverse_apply(ctx, h, xs[use])) / dh[use]
        consts.append(-1.0 / mu)
        devs.append(float(np.max(np.abs(w + 1.0 / mu))))
    return EigenAnalysis(xs, vals, vecs, np.array(consts), np.array(devs), M)


def eigen_selfadjoint_check(ctx: SteinContext, f, g) -> float:
    """|E[(R f) g] - E[f (R g)]|."""
    f, g = as_realfn(f), as_realfn(g)
    rf = RealFn(lambda x: selfadjoint_apply(ctx, f, x))
    rg = RealFn(lambda x: selfadjoint_apply(ctx, g, x))
    return abs(_expect(ctx, _product(rf, g)) - _expect(ctx, _product(f, rg)))
