"""Independent oracles and boundary-condition checks.

The exact oracles re-derive L, K and the self-adjoint operator R by literal
enumeration in rational arithmetic on finite discrete supports; they share
no code with the floating-point path beyond the pmf itself.  The numeric
checker measures how far the integration-by-parts identities are from
holding for a given pair (f, g) and reports the boundary products that
explain the gap.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .distributions import Distribution, closed_form_kernel, make_family, validate
from .errors import InvalidParameter, NotExact, SteinError
from .lattice import LatticeKind, RealFn, as_realfn, delta, named_function
from .numerics import RngState, Tolerance, expectation

# ---------------------------------------------------------------- exact oracles


def _exact_support(d: Distribution):
    if not (d.is_discrete and d.finite_support):
        raise NotExact(f"{d.name}: exact oracles need a finite discrete support")
    if d.exact_pmf is None:
        raise NotExact(f"{d.name}: no rational pmf")
    a, b = int(d.support[0]), int(d.support[1])
    xs = list(range(a, b + 1))
    pm = {}
    for j in xs:
        v = d.exact_pmf(j)
        if not isinstance(v, (int, Fraction)):
            raise NotExact(f"{d.name}: pmf value at {j} is not rational")
        pm[j] = Fraction(v)
    return xs, pm


def _exact_value(h, x: int) -> Fraction:
    """h(x) as a rational: Fractions pass through, floats convert exactly."""
    if isinstance(h, RealFn):
        return Fraction(float(h(float(x))))
    v = h(x)
    if isinstance(v, (int, Fraction)):
        return Fraction(v)
    return Fraction(float(v))


def _exact_ell(ell) -> int:
    ell = LatticeKind.parse(ell)
    if ell == LatticeKind.CONTINUOUS:
        raise InvalidParameter("exact oracles are for ell = -1 or +1")
    return int(ell)


def oracle_inverse_finite(d: Distribution, ell, h, x: int) -> Fraction:
    """L h(x) = (1/p(x)) sum_{j <= x - a_ell} (h(j) - E h) p(j), in exact arithmetic."""
    ell = _exact_ell(ell)
    xs, pm = _exact_support(d)
    hv = {j: _exact_value(h, j) for j in xs}
    eh = sum((hv[j] * pm[j] for j in xs), Fraction(0))
    x = int(x)
    if pm.get(x, 0) == 0:
        return Fraction(0)
    top = x - (1 if ell == 1 else 0)
    return sum(((hv[j] - eh) * pm[j] for j in xs if j <= top), Fraction(0)) / pm[x]


def oracle_kernel_finite(d: Distribution, ell, x: int, xp: int) -> Fraction:
    """K(x, x') = Cov[chi(X, x), chi(X, x')], chi(X, x) = 1[X <= x - a_ell], by enumeration."""
    ell = _exact_ell(ell)
    xs, pm = _exact_support(d)
    a_sh = 1 if ell == 1 else 0
    c1 = [j <= x - a_sh for j in xs]
    c2 = [j <= xp - a_sh for j in xs]
    e12 = sum((pm[j] for j, u, v in zip(xs, c1, c2) if u and v), Fraction(0))
    e1 = sum((pm[j] for j, u in zip(xs, c1) if u), Fraction(0))
    e2 = sum((pm[j] for j, v in zip(xs, c2) if v), Fraction(0))
    return e12 - e1 * e2


def oracle_double_form_finite(d: Distribution, ell, f, g) -> Fraction:
    """sum_{x, x'} Delta^{-ell} f(x) K(x, x') Delta^{-ell} g(x') in exact arithmetic."""
    ell = _exact_ell(ell)
    xs, _ = _exact_support(d)

    def dm(fn, x):
        # Delta^{-ell}
        return (_exact_value(fn, x - ell) - _exact_value(fn, x)) / (-ell)
    df = {x: dm(f, x) for x in xs}
    dg = {x: dm(g, x) for x in xs}
    total = Fraction(0)
    for x in xs:
        for xp in xs:
            if df[x] and dg[xp]:
                total += df[x] * oracle_kernel_finite(d, ell, x, xp) * dg[xp]
    return total


def oracle_covariance_finite(d: Distribution, f, g) -> Fraction:
    xs, pm = _exact_support(d)
    fv = {j: _exact_value(f, j) for j in xs}
    gv = {j: _exact_value(g, j) for j in xs}
    ef = sum((fv[j] * pm[j] for j in xs), Fraction(0))
    eg = sum((gv[j] * pm[j] for j in xs), Fraction(0))
    return sum(((fv[j] - ef) * (gv[j] - eg) * pm[j] for j in xs), Fraction(0))


def _exact_params(d: Distribution):
    return [Fraction(repr(float(v))) for v in d.params]


def exact_table_kernel(d: Distribution, ell, x: int) -> Optional[Fraction]:
    """Tabulated tau^ell(x) in exact arithmetic for the finite discrete families."""
    ell = _exact_ell(ell)
    P = _exact_params(d)
    if d.name == "binomial":
        n, th = P
        return th * (n - x) if ell == -1 else (1 - th) * x
    if d.name == "hypergeom":
        n, K, N = P
        return (K - x) * (n - x) / N if ell == -1 else x * (x + N - K - n) / N
    if d.name == "neghypergeom":
        N, K, r = P
        m = N - K + 1
        return (K - x) * (r + x) / m if ell == -1 else x * (N - r + 1 - x) / m
    return None


def oracle_selfadjoint_matrix(d: Distribution, ell) -> list:
    """R h = T(Delta^{-ell} h) as an exact matrix, h clamped to the support."""
    ell = _exact_ell(ell)
    xs, pm = _exact_support(d)
    a, b = xs[0], xs[-1]
    n = len(xs)
    p = lambda j: pm.get(j, Fraction(0))
    clamp = lambda j: min(max(j, a), b)
    rows = [[Fraction(0)] * n for _ in range(n)]
    for col in range(n):
        e = lambda j: Fraction(1 if clamp(j) - a == col else 0)
        dh = lambda j: (e(j - ell) - e(j)) / (-ell)
        for i, x in enumerate(xs):
            rows[i][col] = (dh(x + ell) * p(x + ell) - dh(x) * p(x)) / (ell * p(x))
    return rows


def oracle_spectrum_finite(d: Distribution, ell, digits: int = 40) -> np.ndarray:
    """Eigenvalues of the exact R matrix (descending), via its exact characteristic polynomial."""
    import sympy
    rows = oracle_selfadjoint_matrix(d, ell)
    M = sympy.Matrix([[sympy.Rational(v.numerator, v.denominator) for v in row] for row in rows])
    lam = sympy.Symbol("lam")
    poly = sympy.Poly(M.charpoly(lam).as_expr(), lam)
    roots = poly.nroots(n=digits, maxsteps=200)
    vals = []
    for r in roots:
        re, im = r.as_real_imag()
        if abs(float(im)) > 1e-20:
            raise NotExact(f"complex eigenvalue {r} in a self-adjoint operator")
        vals.append(float(re))
    return np.array(sorted(vals, reverse=True))


# ---------------------------------------------------------------- limits


def _neville_at_zero(t, v) -> float:
    """Value at t = 0 of the interpolating polynomial through (t_k, v_k)."""
    t = list(map(float, t))
    P = list(map(float, v))
    n = len(t)
    for m in range(1, n):
        for i in range(n - m):
            P[i] = (t[i + m] * P[i] - t[i] * P[i + 1]) / (t[i + m] - t[i])
    return P[0]


def endpoint_limit(ctx, fn: Callable, side: str, n: int = 5) -> float:
    """Limit of fn toward an end of the support.

    Discrete laws with a finite end are evaluated at the end point itself;
    otherwise fn is sampled at the quantiles 1e-6 ... 1e-(5+n) toward the
    end and extrapolated to quantile 0 (Neville).
    """
    if side not in ("left", "right"):
        raise InvalidParameter("side must be 'left' or 'right'")
    d = ctx.dist
    a, b = d.support
    end = a if side == "left" else b
    if d.is_discrete and np.isfinite(end):
        return float(np.asarray(fn(np.array([end]))).ravel()[0])
    qs = np.array([10.0 ** -(6 + k) for k in range(n)])
    xs = np.array([float(d.quantile(q if side == "left" else 1 - q)) for q in qs])
    if d.is_discrete:
        lo, hi = d.effective_range()
        x = float(lo if side == "left" else hi)
        return float(np.asarray(fn(np.array([x]))).ravel()[0])
    with np.errstate(all="ignore"):
        vals = np.asarray(fn(xs), dtype=float).ravel()
    ok = np.isfinite(vals) & np.isfinite(xs)
    if np.count_nonzero(ok) < 2 or len(set(xs[ok].tolist())) < np.count_nonzero(ok):
        good = vals[ok]
        return float(good[-1]) if good.size else float("nan")
    return _neville_at_zero(qs[ok], vals[ok])


# ---------------------------------------------------------------- IBP checker


@dataclass
class ConditionReport:
    ibp_v1: dict
    ibp_v2: dict
    boundary_products: dict
    boundary_products_v2: dict
    integrability_flags: dict

    @property
    def ok(self) -> bool:
        return self.ibp_v1["verdict"] == "pass" and self.ibp_v2["verdict"] == "pass"

    def summary(self) -> str:
        return (f"v1 {self.ibp_v1['verdict']} ({self.ibp_v1['residual']:.3g}), "
                f"v2 {self.ibp_v2['verdict']} ({self.ibp_v2['residual']:.3g})")

    def as_dict(self) -> dict:
        return asdict(self)


CHECK_TOL = Tolerance(abs=1e-12, rel=1e-10, max_subdiv=4000, tail_tol=1e-15)


def _boundary_product(ctx, f, g, side):
    """Limit of f(x) p(x) g(x - ell) at x = b + a_ell (right) or x = a - b_ell (left)."""
    d = ctx.dist
    ell = int(ctx.ell)
    a, b = d.support
    if d.is_discrete:
        x = b + ctx.a_shift if side == "right" else a - ctx.b_shift
        if np.isfinite(x):
            pv = float(d.pdf(np.array([x]))[0])
            if pv == 0:
                return 0.0
            return float(f(x)) * pv * float(g(x - ell))
    return endpoint_limit(ctx, lambda u: np.asarray(f(u)) * ctx.p(u) * np.asarray(g(np.asarray(u) - ell)),
                          side)


def boundary_conditions_check(ctx, f, g, threshold: float = 1e-7) -> ConditionReport:
    """Residuals of E[(T f) g] + E[f D g] = 0 (v1) and Cov[f, g] = E[-L f D g] (v2).

    D = Delta^{-ell}.  Never raises: failures to integrate are reported in
    the flags and give a failing verdict with a nan residual.
    """
    from .stein_core import canonical_apply, inverse_apply
    f, g = as_realfn(f), as_realfn(g)
    d = ctx.dist
    minus = -ctx.ell
    dg = RealFn(lambda x: delta(minus, g, x, d.support))
    flags = {}

    def E(name, fn):
        try:
            v = expectation(d, fn, CHECK_TOL)
        except SteinError:
            try:
                v = expectation(d, fn, ctx.tol)
            except SteinError:
                flags[name] = False
                return float("nan")
        flags[name] = bool(np.isfinite(v))
        return v

    tf = RealFn(lambda x: canonical_apply(ctx, f, x))
    lf = RealFn(lambda x: inverse_apply(ctx, f, x))
    ef, eg = E("f", f), E("g", g)
    tfg = E("Tf*g", RealFn(lambda x: np.asarray(tf(x)) * np.asarray(g(x))))
    fdg = E("f*Dg", RealFn(lambda x: np.asarray(f(x)) * np.asarray(dg(x))))
    cov = E("f*g", RealFn(lambda x: (np.asarray(f(x)) - ef) * (np.asarray(g(x)) - eg)))
    try:
        rhs = E("Lf*Dg", RealFn(lambda x: -np.asarray(lf(x)) * np.asarray(dg(x))))
    except SteinError:
        flags["Lf*Dg"] = False
        rhs = float("nan")
    r1 = abs(tfg + fdg)
    r2 = abs(cov - rhs)
    scale1 = 1.0 + abs(fdg) if np.isfinite(fdg) else 1.0
    scale2 = 1.0 + abs(cov) if np.isfinite(cov) else 1.0

    def verdict(r, scale):
        return "pass" if np.isfinite(r) and r <= threshold * scale else "fail"
    products, products2 = {}, {}
    for side in ("left", "right"):
        try:
            products[side] = _boundary_product(ctx, f, g, side)
        except SteinError:
            products[side] = float("nan")
        try:
            products2[side] = _boundary_product(ctx, lf, g, side)
        except SteinError:
            products2[side] = float("nan")
    return ConditionReport(
        ibp_v1={"verdict": verdict(r1, scale1), "residual": r1, "threshold": threshold * scale1},
        ibp_v2={"verdict": verdict(r2, scale2), "residual": r2, "threshold": threshold * scale2},
        boundary_products=products, boundary_products_v2=products2, integrability_flags=flags)


# ---------------------------------------------------------------- invariant suite

# parameter sets exercised by the suite (the tabulated rows plus the logistic law)
SUITE_FAMILIES = [
    ("poisson", (0.5,)), ("poisson", (2.0,)), ("poisson", (20.0,)),
    ("binomial", (3, 0.5)), ("binomial", (50, 0.2)), ("binomial", (10, 0.4)), ("binomial", (5, 0.3)),
    ("negbinomial", (2, 0.3)), ("hypergeom", (5, 4, 10)), ("neghypergeom", (10, 4, 2)),
    ("normal", (0.0, 1.0)), ("normal", (1.0, 4.0)), ("beta", (1.3, 2.4)), ("beta", (2.0, 2.0)),
    ("gamma", (1.3, 2.4)), ("student", (3.0,)), ("fdist", (5.0, 8.0)), ("logistic", (0.0, 1.0)),
]
HEAVY_TAILED = {"student", "fdist"}
# a second decreasing weight function for the sandwich battery
SECOND_WEIGHT = RealFn(lambda x: -np.asarray(x, dtype=float) - 0.3 * np.tanh(x),
                       lambda x: -1.0 - 0.3 / np.cosh(x) ** 2, "neg_identity_tanh")


@dataclass
class CaseResult:
    case: str
    residual: float
    threshold: float
    verdict: str
    note: str = ""


@dataclass
class SuiteReport:
    seed: int
    cases: list = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.verdict in ("pass", "skip") for c in self.cases)

    def failures(self) -> list:
        return [c for c in self.cases if c.verdict not in ("pass", "skip")]

    def to_dict(self, timing: bool = False) -> dict:
        out = {"seed": self.seed, "passed": self.passed,
               "cases": [asdict(c) for c in sorted(self.cases, key=lambda c: c.case)]}
        if timing:
            out["elapsed"] = self.elapsed
        return out

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing), indent=1, sort_keys=True, default=_json_default)


def _json_default(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return repr(v)


class _Recorder:
    def __init__(self, report: SuiteReport):
        self.report = report

    def add(self, case, residual, threshold, note=""):
        r = float(residual)
        ok = np.isfinite(r) and r <= threshold
        self.report.cases.append(CaseResult(case, r, float(threshold), "pass" if ok else "fail", note))

    def skip(self, case, note):
        self.report.cases.append(CaseResult(case, 0.0, 0.0, "skip", note))

    def run(self, case, fn):
        try:
            fn()
        except Exception as exc:  # a crash is a failed case, not a crashed suite
            self.report.cases.append(CaseResult(case, float("nan"), 0.0, "error",
                                                f"{type(exc).__name__}: {exc}"))


def _scope_items(scope):
    if scope in (None, "all") or scope == ["all"]:
        return [(name, params, None) for name, params in SUITE_FAMILIES]
    items = []
    for entry in scope:
        if isinstance(entry, Distribution):
            items.append((entry.name, tuple(entry.params or ()), entry))
        elif isinstance(entry, tuple):
            items.append((entry[0], tuple(entry[1]), None))
        else:
            hits = [(n, p, None) for n, p in SUITE_FAMILIES if n == entry]
            if not hits:
                raise InvalidParameter(f"unknown family {entry!r} in scope")
            items.extend(hits)
    return items


def _label(name, params):
    return f"{name}({','.join(repr(float(p)) for p in params)})"


def invariant_suite(scope="all", seed: int = 7, mc_samples: int = 100_000) -> SuiteReport:
    """Run the cross-module invariants over the requested families.

    ``scope`` is "all", or a list of family ids, (id, params) pairs or
    Distribution objects.  Deterministic for a given seed.
    """
    t0 = time.perf_counter()
    report = SuiteReport(seed=seed)
    rec = _Recorder(report)
    rng = RngState(seed)
    for k, (name, params, dist) in enumerate(_scope_items(scope)):
        label = _label(name, params)
        d = dist if dist is not None else make_family(name, list(params))
        vr = validate(d, 0 if (d.is_discrete and d.finite_support and d.exact_pmf is not None) else 1e-8)
        rec.add(f"{label}/validate", 0.0 if vr.ok else max(vr.mass_error, 1.0), 0.0,
                "" if vr.ok else json.dumps(vr.as_dict(), default=_json_default))
        if not vr.ok:
            rec.skip(f"{label}/downstream", "validation failed")
            continue
        ells = [-1, 1] if d.is_discrete else [0]
        for ell in ells:
            _family_cases(rec, d, name, label, ell, rng.split(k * 4 + ell + 1), mc_samples)
        if name == "normal" and tuple(params) == (0.0, 1.0):
            _gaussian_cases(rec, d, label)
    report.elapsed = time.perf_counter() - t0
    return report


def scaled_monomials(d: Distribution, degree: int) -> list:
    """((x - a) / (b - a))^k, k = 0..degree: a polynomial basis of order-one size on [a, b]."""
    a, b = map(float, d.support)
    return [RealFn(lambda x, k=k: ((np.asarray(x, dtype=float) - a) / (b - a)) ** k, None, f"u^{k}")
            for k in range(degree + 1)]


def _bulk_points(ctx, n: int = 5) -> np.ndarray:
    """n evaluation points in the bulk of the law, where sampling reaches."""
    d = ctx.dist
    if not d.is_discrete:
        return np.array([float(d.quantile(q)) for q in np.linspace(0.1, 0.9, n)])
    lo, hi = d.support
    m = float(d.quantile(0.5)) - n // 2
    m = min(max(m, lo), hi - n + 1) if np.isfinite(hi) else max(m, lo)
    return m + np.arange(n, dtype=float)


def _grid_for(ctx, n=512):
    g = ctx.grid(n)
    return g[ctx.interior(g)]


def _family_cases(rec, d, name, label, ell, rng, mc_samples):
    from . import bounds as B
    from . import stein_core as S
    ctx = S.SteinContext(d, ell)
    tag = f"{label}/ell={ell:+d}"
    grid = _grid_for(ctx)
    exact = d.is_discrete and d.finite_support and d.exact_pmf is not None
    heavy = name in HEAVY_TAILED
    ident = named_function("identity")

    def kernel():
        closed = closed_form_kernel(d, ell)
        if closed is None:
            rec.skip(f"{tag}/kernel", "no tabulated kernel")
            return
        num = -np.asarray(S.inverse_apply(ctx, ident, grid))
        thr = 1e-12 if d.is_discrete else 1e-8
        rec.add(f"{tag}/kernel", np.max(np.abs(num - closed(grid))), thr)
    rec.run(f"{tag}/kernel", kernel)

    if exact:
        def kernel_exact():
            xs = range(int(d.support[0]), int(d.support[1]) + 1)
            worst = Fraction(0)
            for x in xs:
                tab = exact_table_kernel(d, ell, x)
                if tab is None:
                    continue
                worst = max(worst, abs(-oracle_inverse_finite(d, ell, ident, x) - tab))
            rec.add(f"{tag}/kernel_exact", float(worst), 0.0)
        rec.run(f"{tag}/kernel_exact", kernel_exact)

        def oracle_float():
            xs = np.arange(d.support[0], d.support[1] + 1)
            worst = 0.0
            for hn in ("identity", "square", "cube"):
                h = named_function(hn)
                num = np.asarray(S.inverse_apply(ctx, h, xs))
                ex = np.array([float(oracle_inverse_finite(d, ell, h, int(x))) for x in xs])
                worst = max(worst, float(np.max(np.abs(num - ex) / (1 + np.abs(ex)))))
            rec.add(f"{tag}/oracle_float", worst, 1e-12)
        rec.run(f"{tag}/oracle_float", oracle_float)

        def double_exact():
            res = oracle_double_form_finite(d, ell, ident, ident) - oracle_covariance_finite(d, ident, ident)
            rec.add(f"{tag}/double_form_exact", float(abs(res)), 0.0)
        rec.run(f"{tag}/double_form_exact", double_exact)

    def mean_tau():
        var = d.variance
        if not np.isfinite(var):
            rec.skip(f"{tag}/mean_tau", "infinite variance")
            return
        tau = S.stein_kernel(ctx, prefer_closed=False)
        et = expectation(d, tau, Tolerance(abs=1e-12, rel=1e-11, max_subdiv=4000, tail_tol=1e-15))
        rec.add(f"{tag}/mean_tau", abs(et - var), 1e-8)
    rec.run(f"{tag}/mean_tau", mean_tau)

    hs = ["identity", "square"] + ([] if heavy or name == "logistic" else ["exp_neg"])
    for hn in hs:
        def inv_identity(hn=hn):
            h = named_function(hn)
            lh = S.inverse_fn(ctx, h)
            r = np.asarray(S.canonical_apply(ctx, lh, grid)) - (np.asarray(h(grid)) - ctx.expect(h))
            rec.add(f"{tag}/inverse_identity/{hn}", np.max(np.abs(r)), 1e-8)
        rec.run(f"{tag}/inverse_identity/{hn}", inv_identity)

    pts = _bulk_points(ctx)

    def repr_two_agree():
        worst = 0.0
        for fn in ("identity", "atan"):
            f = named_function(fn)
            a = np.asarray(S.repr_two(ctx, f, pts))
            b = -np.asarray(S.inverse_apply(ctx, f, pts))
            worst = max(worst, float(np.max(np.abs(a - b) / (1 + np.abs(b)))))
        rec.add(f"{tag}/repr_two", worst, 1e-8)
    rec.run(f"{tag}/repr_two", repr_two_agree)

    if (name, tuple(d.params)) in {("normal", (0.0, 1.0)), ("poisson", (2.0,)), ("binomial", (10, 0.4))}:
        def repr_one():
            worst = 0.0
            for i, fn in enumerate(("identity", "square")):
                f = named_function(fn)
                est, se = S.repr_one_mc(ctx, f, pts, mc_samples, rng.split(10 + i))
                ref = np.asarray(S.repr_two(ctx, f, pts))
                err = np.abs(np.asarray(est) - ref)
                with np.errstate(all="ignore"):
                    z = np.where(err == 0, 0.0, err / np.asarray(se))
                worst = max(worst, float(np.max(z)))
            rec.add(f"{tag}/repr_one_mc_z", worst, 3.0)
        rec.run(f"{tag}/repr_one_mc_z", repr_one)

    def kernel_props():
        sub = grid[np.linspace(0, grid.size - 1, 16).astype(int)]
        X, Y = np.meshgrid(sub, sub, indexing="ij")
        K = np.asarray(S.k_kernel(ctx, X, Y))
        Kd = np.asarray(S.k_kernel(ctx, np.minimum(X, Y), np.minimum(X, Y)))
        viol = max(float(np.max(np.abs(K - K.T))), float(np.max(-K)), float(np.max(K - Kd)))
        rec.add(f"{tag}/kernel_props", max(viol, 0.0), 1e-15)
    rec.run(f"{tag}/kernel_props", kernel_props)

    def sign_constancy():
        worst = 0.0
        for fn in ("identity", "atan"):
            v = np.asarray(S.inverse_apply(ctx, named_function(fn), grid))
            worst = max(worst, float(np.max(np.maximum(v, 0.0))))
        rec.add(f"{tag}/sign_constancy", worst, 0.0, "increasing f gives L f <= 0")
    rec.run(f"{tag}/sign_constancy", sign_constancy)

    def nonuniform():
        worst = 0.0
        for fn in ("atan", "tanh"):
            f = named_function(fn)
            sup = math.pi / 2 if fn == "atan" else 1.0
            lf = np.abs(np.asarray(S.inverse_apply(ctx, f, grid)))
            bound = np.asarray(B.nonuniform_factor_bound(ctx, f, grid, f_sup=sup))
            worst = max(worst, float(np.max((lf - bound) / (1 + bound))))
        rec.add(f"{tag}/nonuniform_factor", max(worst, 0.0), 1e-12)
    rec.run(f"{tag}/nonuniform_factor", nonuniform)

    pairs = [("identity", "identity"), ("identity", "square"), ("square", "square"), ("sin", "identity")]
    if not heavy and name != "logistic":
        pairs.append(("sin", "exp_neg"))
    if heavy:
        pairs = [("identity", "identity")] + ([("identity", "square")] if name == "fdist" else [])
    for fn, gn in pairs:
        def closure(fn=fn, gn=gn):
            f, g = named_function(fn), named_function(gn)
            cov = B.cov_exact(ctx, f, g)
            s = B.cov_identity_rhs(ctx, f, g, "single")
            dbl = B.cov_identity_rhs(ctx, f, g, "double")
            rec.add(f"{tag}/cov_identity/{fn},{gn}", max(abs(cov - s), abs(cov - dbl)) / (1 + abs(cov)), 1e-6)
        rec.run(f"{tag}/cov_identity/{fn},{gn}", closure)

    gs = ["identity", "square", "atan"] if not heavy else ["identity", "atan"]
    for gn in gs:
        def sandwich(gn=gn):
            rep = B.variance_sandwich(ctx, named_function(gn), check_boundary=False)
            viol = max(rep.lower - rep.center, rep.center - rep.upper, 0.0)
            rec.add(f"{tag}/sandwich/{gn}", viol, rep.slack)
            tab = B.table_bounds(ctx, named_function(gn))
            if tab is not None:
                dev = max(abs(tab["lower"] - rep.lower), abs(tab["upper"] - rep.upper)) / (1 + rep.center)
                rec.add(f"{tag}/table_row/{gn}", dev, 1e-8)
        rec.run(f"{tag}/sandwich/{gn}", sandwich)

    if not heavy:
        for gn in gs:
            def sandwich_h2(gn=gn):
                rep = B.variance_sandwich(ctx, named_function(gn), SECOND_WEIGHT, check_boundary=False)
                viol = max(rep.lower - rep.center, rep.center - rep.upper, 0.0)
                rec.add(f"{tag}/sandwich_h2/{gn}", viol, rep.slack)
            rec.run(f"{tag}/sandwich_h2/{gn}", sandwich_h2)

    for hname, h in (("h1", named_function("neg_identity")), ("h2", SECOND_WEIGHT)):
        if hname == "h2" and heavy:
            continue

        def saturation(h=h, hname=hname):
            rep = B.variance_sandwich(ctx, h.affine(2.0, 1.0), h, check_boundary=False)
            rec.add(f"{tag}/saturation_{hname}", max(abs(rep.upper - rep.center), abs(rep.lower - rep.center))
                    / (1 + rep.center), 1e-8)
        if np.isfinite(d.variance):
            rec.run(f"{tag}/saturation_{hname}", saturation)

    if d.is_discrete and d.finite_support and ell == -1:
        def counterexample():
            # f = 1 has f(b) p(b) != 0, so the first identity must fail by exactly that product
            n = float(d.support[1])
            one = named_function("one")
            rep = boundary_conditions_check(ctx, one, one)
            expected = float(d.pdf(np.array([n]))[0])
            if expected <= 100 * 1e-7:
                rec.skip(f"{tag}/counterexample", f"f(b)p(b) = {expected!r} is below the detection threshold")
                return
            flagged = rep.ibp_v1["verdict"] == "fail"
            miss = abs(rep.ibp_v1["residual"] - expected)
            rec.add(f"{tag}/counterexample_detected", 0.0 if flagged else 1.0, 0.0,
                    f"v1 residual {rep.ibp_v1['residual']!r}, f(b)p(b) = {expected!r}")
            rec.add(f"{tag}/counterexample_residual", miss, 1e-12)
        rec.run(f"{tag}/counterexample", counterexample)

    def ibp_in_class():
        tau = S.stein_kernel(ctx)
        worst = 0.0
        for gn in ["one", "identity"] + ([] if heavy else ["square"]):
            rep = boundary_conditions_check(ctx, tau, named_function(gn))
            worst = max(worst, rep.ibp_v1["residual"], rep.ibp_v2["residual"])
        rec.add(f"{tag}/ibp_in_class", worst, 1e-7)
    rec.run(f"{tag}/ibp_in_class", ibp_in_class)

    def standardized():
        eta = named_function("identity")
        h = named_function("atan")
        g = S.solution_fn(ctx, h, eta)
        sub = grid[np.linspace(0, grid.size - 1, 40).astype(int)]
        if d.is_discrete:
            # A g needs g on both sides of x
            sub = sub[ctx.interior(sub - 1) & ctx.interior(sub + 1)]
        else:
            sub = sub[2:-2]
        lhs = np.asarray(S.standardized_apply(ctx, eta, g, sub))
        rhs = np.asarray(h(sub)) - ctx.expect(h)
        rec.add(f"{tag}/stein_equation", np.max(np.abs(lhs - rhs)), 1e-7)
    rec.run(f"{tag}/stein_equation", standardized)

    def menz_otto():
        from .errors import NotLogConcave
        try:
            S._check_log_concave(ctx)
        except NotLogConcave as exc:
            rec.skip(f"{tag}/menz_otto", f"not log-concave: {exc}")
            return
        worst = 0.0
        for q in (0.25, 0.5, 0.75):
            xp = float(d.quantile(q))
            worst = max(worst, abs(S.menz_otto_mass(ctx, xp) - 1.0))
        rec.add(f"{tag}/menz_otto", worst, 1e-6)
    if not d.is_discrete:
        rec.run(f"{tag}/menz_otto", menz_otto)

    if exact and d.support[1] - d.support[0] <= 12:
        def eigen():
            ea = B.eigen_weight_analysis(ctx)
            ref = oracle_spectrum_finite(d, ell)
            rec.add(f"{tag}/eigen_spectrum", np.max(np.abs(ea.eigenvalues - ref)), 1e-10)
            rec.add(f"{tag}/eigen_weights", float(np.max(ea.weight_deviation)) if ea.weight_deviation.size else 0.0,
                    1e-8)
            basis = scaled_monomials(d, 5)
            worst = max(B.eigen_selfadjoint_check(ctx, f, g)
                        for i, f in enumerate(basis) for g in basis[i + 1:])
            rec.add(f"{tag}/eigen_selfadjoint", worst, 1e-12)
        rec.run(f"{tag}/eigen", eigen)


def _gaussian_cases(rec, d, label):
    from . import bounds as B
    from . import stein_core as S
    ctx = S.SteinContext(d, 0)
    grid = _grid_for(ctx)

    def hermite():
        he2 = named_function("hermite2")
        w = np.asarray(B.klaassen_weight(ctx, he2, grid))
        ok = np.abs(grid) > 1e-3
        rec.add(f"{label}/hermite_weight", np.max(np.abs(w[ok] - 0.5)), 1e-8)
    rec.run(f"{label}/hermite_weight", hermite)

    def mills():
        x = np.linspace(0, 10, 200)
        r = np.asarray(B.gaussian_kernel_ratio(x))
        lo, hi = B.mills_envelope(x)
        viol = max(float(np.max(lo - r)), float(np.max(r - hi)), 0.0)
        rec.add(f"{label}/mills_envelope", viol, 1e-15)
        rec.add(f"{label}/mills_max", abs(float(np.max(r)) - 0.5 * math.sqrt(math.pi / 2)), 1e-9)
    rec.run(f"{label}/mills", mills)

    def sup_bound():
        worst = 0.0
        for f in bounded_battery():
            lf, bound = B.gaussian_sup_factor(f, grid)
            worst = max(worst, lf - bound)
        rec.add(f"{label}/gaussian_sup_bound", max(worst, 0.0), 1e-12)
    rec.run(f"{label}/gaussian_sup_bound", sup_bound)

    def uniform_factor():
        worst = 0.0
        for hn in ("identity", "sin", "atan", "tanh", "neg_identity"):
            worst = max(worst, B.uniform_stein_factor(ctx, named_function(hn), grid=grid))
        rec.add(f"{label}/uniform_stein_factor", max(worst - 1.0, 0.0), 1e-9)
    rec.run(f"{label}/uniform_stein_factor", uniform_factor)

    def chernoff():
        rep = B.variance_sandwich(ctx, named_function("square"), check_boundary=False)
        rec.add(f"{label}/chernoff_square", max(abs(rep.lower), abs(rep.center - 2), abs(rep.upper - 4)), 1e-8)
        rep = B.variance_sandwich(ctx, named_function("identity"), check_boundary=False)
        rec.add(f"{label}/chernoff_identity",
                max(abs(rep.lower - 1), abs(rep.center - 1), abs(rep.upper - 1)), 1e-8)
        bl = B.brascamp_lieb_upper(ctx, named_function("square"))
        rec.add(f"{label}/brascamp_lieb_vs_sandwich", abs(bl - rep.upper * 0 - 4.0), 1e-8)
    rec.run(f"{label}/chernoff", chernoff)


def bounded_battery() -> list:
    """Ten bounded test functions (sup-norm attained or approached on the grid)."""
    return [
        named_function("sin"), named_function("cos"), named_function("tanh"),
        RealFn(lambda x: np.arctan(x) / (math.pi / 2), None, "atan_scaled"),
        RealFn(lambda x: np.tanh(5 * np.asarray(x)), None, "tanh5"),
        RealFn(lambda x: 1 / (1 + np.asarray(x) ** 2), None, "cauchy_bump"),
        RealFn(lambda x: np.exp(-np.asarray(x) ** 2), None, "gauss_bump"),
        RealFn(lambda x: np.cos(3 * np.asarray(x)), None, "cos3"),
        RealFn(lambda x: np.sin(np.asarray(x)) * np.exp(-np.asarray(x) ** 2 / 4), None, "damped_sin"),
        RealFn(lambda x: np.sign(np.asarray(x)) * (1 - np.exp(-np.abs(np.asarray(x)))), None, "soft_sign"),
    ]
