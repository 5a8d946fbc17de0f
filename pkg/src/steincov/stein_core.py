"""Stein operators for a univariate law paired with a lattice kind.

Notation: p is the density (or pmf) with support [a, b], ell the lattice
kind, a_ell/b_ell its shift constants.

    canonical       T f   = Delta^ell(f p) / p                  (0 off the support)
    pseudo-inverse  L h(x) = (1/p(x)) int_a^{x - a_ell} (h - E h) p
                           = (1/p(x)) int_{x + b_ell}^b (E h - h) p
    Stein kernel    tau   = -L(Id)
    Hoeffding kernel K(x, x') = P(X <= min - a_ell) * P(X >= max + a_{-ell})

All point-wise operations are vectorised over x.  The pseudo-inverse is
computed for a whole batch of points at once: the support is cut at the
sorted points, each piece is integrated once, and the partial sums are
accumulated from whichever end is closer in probability.  Neighbouring
points therefore share their quadrature error, which keeps finite
differences of L h clean.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .distributions import Distribution, closed_form_kernel
from .errors import (DivisionByZeroWeight, InvalidParameter, NoConvergence, NonFiniteValue,
                     NotIntegrable, NotLogConcave, TailUnderflow)
from .lattice import LatticeKind, RealFn, as_realfn, chi, delta, named_function
from .numerics import (DEFAULT_TOL, OPERATOR_TOL, RngState, Tolerance, expectation,
                       integrate_batch, quantile_grid, sample)

LOG_TINY = math.log(1e-280)


def _out(template, values):
    values = np.asarray(values, dtype=float)
    return float(values.reshape(())) if np.ndim(template) == 0 else values.reshape(np.shape(template))


class SteinContext:
    """A law, a lattice kind and a tolerance. Caches E[h] per function object."""

    def __init__(self, dist: Distribution, ell=None, tol: Optional[Tolerance] = None):
        if ell is None:
            ell = LatticeKind.FORWARD if dist.is_discrete else LatticeKind.CONTINUOUS
        ell = LatticeKind.parse(ell)
        if not dist.compatible(ell):
            raise InvalidParameter(
                f"lattice kind {int(ell):+d} does not match a {dist.kind} law")
        self.dist = dist
        self.ell = ell
        self.tol = tol or DEFAULT_TOL
        self.op_tol = OPERATOR_TOL
        self._means = {}

    def __repr__(self):
        return f"SteinContext({self.dist.name}{self.dist.params}, ell={int(self.ell):+d})"

    @property
    def a_shift(self):
        return self.ell.shifts()[0]

    @property
    def b_shift(self):
        return self.ell.shifts()[1]

    def expect(self, h) -> float:
        """E[h(X)], computed once per function object."""
        h = as_realfn(h)
        key = id(h)
        if key not in self._means:
            try:
                val = expectation(self.dist, h, self.op_tol)
            except NoConvergence:
                # near-cancelling integrands: measure accuracy against E|h| instead of |E h|
                try:
                    mass = expectation(self.dist, lambda x: np.abs(h(x)), self.tol)
                    tol = Tolerance(abs=self.op_tol.rel * mass, rel=self.op_tol.rel,
                                    max_subdiv=self.op_tol.max_subdiv, tail_tol=self.op_tol.tail_tol)
                    val = expectation(self.dist, h, tol)
                except (NoConvergence, NonFiniteValue) as exc:
                    raise NotIntegrable(f"E[{h.name}] does not converge: {exc}") from exc
            except NonFiniteValue as exc:
                raise NotIntegrable(f"E[{h.name}] does not converge: {exc}") from exc
            self._means.setdefault(key, (h, val))
        return self._means[key][1]

    def p(self, x):
        return np.asarray(self.dist.pdf(np.asarray(x, dtype=float)), dtype=float)

    def logp(self, x):
        return np.asarray(self.dist.log_pdf(np.asarray(x, dtype=float)), dtype=float)

    def inside(self, x):
        return np.asarray(self.dist.in_support(x), dtype=bool)

    def interior(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.dist.support
        if self.dist.is_discrete:
            return self.inside(x)
        return (x > a) & (x < b)

    def grid(self, n: int = 512, lo: float = 1e-6, hi: float = 1 - 1e-6):
        return quantile_grid(self.dist, lo, hi, n)


# ---------------------------------------------------------------- score

def _log_density_slope(ctx: SteinContext, x):
    d = ctx.dist
    if d.score_fn is not None:
        with np.errstate(all="ignore"):
            return np.asarray(d.score_fn(x), dtype=float) * np.ones(np.shape(x))
    return np.asarray(delta(0, RealFn(d.log_pdf), x, d.support), dtype=float)


def canonical_apply(ctx: SteinContext, f, x):
    """T f(x) = Delta^ell(f p)(x) / p(x) on the support, 0 elsewhere."""
    f = as_realfn(f)
    x = np.asarray(x, dtype=float)
    flat = np.atleast_1d(x).ravel()
    out = np.zeros(flat.shape)
    d = ctx.dist
    if ctx.ell == LatticeKind.CONTINUOUS:
        m = ctx.interior(flat)
        if np.any(m):
            xm = flat[m]
            if np.any(ctx.p(xm) == 0):
                bad = xm[ctx.p(xm) == 0][0]
                raise NonFiniteValue(f"p vanishes at interior point {bad!r}")
            fx = np.atleast_1d(f(xm))
            dfx = np.atleast_1d(delta(0, f, xm, d.support))
            out[m] = dfx + fx * _log_density_slope(ctx, xm)
    else:
        m = ctx.inside(flat)
        if np.any(m):
            xm = flat[m]
            ell = int(ctx.ell)
            lx = ctx.logp(xm)
            ly = ctx.logp(xm + ell)
            with np.errstate(all="ignore"):
                ratio = np.where(np.isfinite(ly), np.exp(ly - lx), 0.0)
                fy = np.atleast_1d(f(xm + ell))
                shifted = np.where(ratio > 0, fy * ratio, 0.0)
            fx = np.atleast_1d(f(xm))
            out[m] = (shifted - fx) / ell
    if not np.all(np.isfinite(out)):
        raise NonFiniteValue("canonical operator produced a non-finite value")
    return _out(x, out)


def score(ctx: SteinContext) -> RealFn:
    """Generalised score Delta^ell p / p = T 1."""
    one = named_function("one")
    if ctx.ell == LatticeKind.CONTINUOUS:
        def fn(x):
            x = np.asarray(x, dtype=float)
            with np.errstate(all="ignore"):
                return np.where(ctx.interior(x), _log_density_slope(ctx, x), 0.0)
        d = ctx.dist
        der = None
        if d.score_derivative is not None:
            der = lambda x: np.where(ctx.interior(x), d.score_derivative(np.asarray(x, dtype=float)) * np.ones(np.shape(x)), 0.0)
        return RealFn(fn, der, "score")
    return RealFn(lambda x: canonical_apply(ctx, one, x), None, "score")


def score_slope(ctx: SteinContext, x):
    """Delta^{-ell} of the score."""
    return delta(-ctx.ell, score(ctx), x, ctx.dist.support)


def fisher_info(ctx: SteinContext) -> float:
    s = score(ctx)
    return expectation(ctx.dist, lambda x: np.asarray(s(x)) ** 2, ctx.tol)


# ---------------------------------------------------------------- pseudo-inverse

def _inverse_continuous(ctx: SteinContext, h: RealFn, xs: np.ndarray) -> np.ndarray:
    d = ctx.dist
    a, b = d.support
    out = np.zeros(xs.shape)
    lp = ctx.logp(xs)
    if np.any(np.isneginf(lp)):
        raise TailUnderflow(f"p vanishes at interior point {xs[np.isneginf(lp)][0]!r}")
    deep = lp < LOG_TINY
    reg = xs[~deep]
    e_h = None
    median = None
    if reg.size:
        bnd = np.concatenate([[a], reg, [b]])
        lo, hi = bnd[:-1], bnd[1:]
        k = lo.size

        def integrand(u, owner):
            pu = ctx.p(u)
            with np.errstate(all="ignore"):
                hv = np.asarray(h(u), dtype=float) * np.ones(u.shape)
                hp = np.where(pu > 0, hv * pu, 0.0)
            return np.where(owner < k, hp, pu)
        vals, _ = integrate_batch(integrand, np.concatenate([lo, lo]), np.concatenate([hi, hi]),
                                  ctx.op_tol, d.scale)
        A, B = vals[:k], vals[k:]
        mass = math.fsum(B.tolist())
        e_h = math.fsum(A.tolist()) / mass
        s = A - e_h * B
        lower = np.cumsum(s)[:-1]
        upper = -np.cumsum(s[::-1])[::-1][1:]
        cum_mass = np.cumsum(B)[:-1]
        num = np.where(cum_mass <= 0.5 * mass, lower, upper)
        out[~deep] = num / np.exp(lp[~deep])
        below = cum_mass <= 0.5 * mass
        median = (reg[below].max() if np.any(below) else a, reg[~below].min() if np.any(~below) else b)
    if np.any(deep):
        if e_h is None:
            e_h = ctx.expect(h)
        xd = xs[deep]
        if median is None:
            try:
                m = float(d.quantile(0.5))
            except Exception:
                m = float(d.mode)
            left = xd < m
        else:
            left = xd <= median[0]
        slope = np.abs(_log_density_slope(ctx, xd))
        sc = 1.0 / np.maximum(np.nan_to_num(slope, nan=0.0), 1.0 / d.scale)
        lo = np.where(left, a, xd)
        hi = np.where(left, xd, b)
        ref = lp[deep]

        def scaled(u, owner):
            w = np.exp(ctx.logp(u) - ref[owner])
            with np.errstate(all="ignore"):
                hv = np.asarray(h(u), dtype=float) * np.ones(u.shape)
                return np.where(w > 0, (hv - e_h) * w, 0.0)
        # log p itself is only accurate to ~eps*|log p| out here
        rel = min(1e-6, max(ctx.op_tol.rel, 64 * np.finfo(float).eps * float(np.max(np.abs(ref)))))
        deep_tol = Tolerance(abs=0.0, rel=rel, max_subdiv=ctx.op_tol.max_subdiv)
        vals, _ = integrate_batch(scaled, lo, hi, deep_tol, sc, raise_on_fail=False)
        out[deep] = np.where(left, vals, -vals)
    return out


def _relative_pmf(d, grid, lp):
    """pmf on an integer grid up to a constant, peak ~ 1.

    With an exact ratio p(x+1)/p(x) the values are built by products outward
    from the mode, so q(j)/q(x) carries only |j - x| roundings.
    """
    if d.pmf_ratio is None or grid.size < 2:
        return np.exp(lp - np.max(lp))
    k = int(np.clip(np.argmax(lp), 0, grid.size - 1))
    r = np.asarray(d.pmf_ratio(grid[:-1]), dtype=float)
    q = np.empty(grid.size)
    q[k] = 1.0
    with np.errstate(all="ignore"):
        q[k + 1:] = np.cumprod(r[k:])
        q[:k] = np.cumprod((1.0 / r[:k])[::-1])[::-1]
    q = np.where(np.isfinite(q) & np.isfinite(lp), q, 0.0)
    return q


def _inverse_discrete(ctx: SteinContext, h: RealFn, xs: np.ndarray) -> np.ndarray:
    d = ctx.dist
    a_sh, b_sh = ctx.ell.shifts()
    lo, hi = d.effective_range(extra=xs)
    grid = np.arange(lo, hi + 1, dtype=float)
    lp = ctx.logp(grid)
    q = _relative_pmf(d, grid, lp)
    ref = 0.0
    with np.errstate(divide="ignore"):
        lq = np.log(q)
    hv = np.asarray(h(grid), dtype=float) * np.ones(grid.shape)
    if not np.all(np.isfinite(hv[q > 0])):
        raise NonFiniteValue(f"{h.name} is not finite on the support")
    hv = np.where(q > 0, hv, 0.0)
    total_q = math.fsum(q.tolist())
    e_h = math.fsum((hv * q).tolist()) / total_q
    s = (hv - e_h) * q
    cum = np.concatenate([[0.0], np.cumsum(s)])  # cum[i] = sum_{j < lo + i}
    rev = np.concatenate([np.cumsum(s[::-1])[::-1], [0.0]])  # rev[i] = sum_{j >= lo + i}
    cq = np.concatenate([[0.0], np.cumsum(q)])
    idx = (xs - lo).astype(int)
    lower = cum[idx + 1 - a_sh]
    upper = -rev[idx + b_sh]
    use_lower = cq[idx + 1] <= 0.5 * total_q
    num = np.where(use_lower, lower, upper)
    lx = lq[idx]
    out = np.empty(xs.shape)
    ok = lx > -600.0
    out[ok] = num[ok] / np.exp(lx[ok])
    for i in np.flatnonzero(~ok):
        # far tail: rescale around the point itself
        w = np.exp(lp - lp[idx[i]])
        si = (hv - e_h) * w
        if use_lower[i]:
            out[i] = math.fsum(si[: idx[i] + 1 - a_sh].tolist())
        else:
            out[i] = -math.fsum(si[idx[i] + b_sh:].tolist())
    return out


def inverse_apply(ctx: SteinContext, h, x):
    """Pseudo-inverse L h(x); 0 outside the support."""
    h = as_realfn(h)
    x = np.asarray(x, dtype=float)
    flat = np.atleast_1d(x).ravel()
    out = np.zeros(flat.shape)
    m = ctx.interior(flat)
    if np.any(m):
        xs, inv = np.unique(flat[m], return_inverse=True)
        try:
            if ctx.dist.is_discrete:
                vals = _inverse_discrete(ctx, h, xs)
            else:
                vals = _inverse_continuous(ctx, h, xs)
        except NonFiniteValue as exc:
            raise NotIntegrable(f"L[{h.name}] failed: {exc}") from exc
        out[m] = vals[inv]
    return _out(x, out)


def inverse_fn(ctx: SteinContext, h) -> RealFn:
    """x -> L h(x) as a RealFn."""
    h = as_realfn(h)
    return RealFn(lambda x: inverse_apply(ctx, h, x), None, f"L[{h.name}]")


def stein_kernel(ctx: SteinContext, prefer_closed: bool = True) -> RealFn:
    """tau = -L(Id). ``provenance`` is 'closed-form' or 'numeric'."""
    closed = closed_form_kernel(ctx.dist, ctx.ell) if prefer_closed else None
    if closed is not None:
        fn = RealFn(lambda x: np.where(ctx.inside(x), closed(x), 0.0), None,
                    f"tau[{ctx.dist.name}]")
        fn.provenance = "closed-form"
        return fn
    ident = named_function("identity")
    fn = RealFn(lambda x: -np.asarray(inverse_apply(ctx, ident, x)), None, f"tau[{ctx.dist.name}]")
    fn.provenance = "numeric"
    return fn


# ---------------------------------------------------------------- kernels

def lower_mass(ctx: SteinContext, x):
    """E[chi^ell(X, x)] = P(X <= x - a_ell)."""
    x = np.asarray(x, dtype=float)
    return ctx.dist.cdf_values(x - ctx.a_shift)


def upper_mass(ctx: SteinContext, x):
    """E[chi^{-ell}(x, X)] = P(X >= x + a_{-ell})."""
    x = np.asarray(x, dtype=float)
    a_neg = (-ctx.ell).shifts()[0]
    if ctx.dist.is_discrete:
        return ctx.dist.sf_values(x + a_neg - 1)
    return ctx.dist.sf_values(x)


def k_kernel(ctx: SteinContext, x, xp):
    """Hoeffding kernel K(x, x') in its factorised form."""
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    lo = np.minimum(x, xp)
    hi = np.maximum(x, xp)
    val = np.asarray(lower_mass(ctx, lo)) * np.asarray(upper_mass(ctx, hi))
    return float(val) if np.ndim(val) == 0 else val


def phi_factor(ctx: SteinContext, u, x, v):
    """chi^ell(u, x) chi^{-ell}(x, v) / p(x), 0 outside the support."""
    x = np.asarray(x, dtype=float)
    px = ctx.p(x)
    ind = np.asarray(chi(ctx.ell, u, x)) * np.asarray(chi(-ctx.ell, x, v))
    with np.errstate(all="ignore"):
        val = np.where(ctx.inside(x) & (px > 0), ind / np.where(px > 0, px, 1.0), 0.0)
    return float(val) if np.ndim(val) == 0 else val


def repr_one_mc(ctx: SteinContext, f, x, n: int, rng: RngState):
    """Monte Carlo estimate of -L f(x) = E[(f(X2) - f(X1)) Phi(X1, x, X2)].

    Returns (estimate, standard error), each shaped like x.
    """
    f = as_realfn(f)
    x = np.asarray(x, dtype=float)
    x1 = sample(ctx.dist, n, rng.split(1))
    x2 = sample(ctx.dist, n, rng.split(2))
    diff = np.asarray(f(x2)) - np.asarray(f(x1))
    est, se = [], []
    for xv in np.atleast_1d(x).ravel():
        vals = diff * phi_factor(ctx, x1, xv, x2)
        est.append(float(np.mean(vals)))
        se.append(float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else float("inf"))
    return _out(x, est), _out(x, se)


def kernel_transform(ctx: SteinContext, f, x):
    """sum/integral over u of K(u, x) Delta^{-ell} f(u), i.e. -p(x) L f(x) via the kernel."""
    f = as_realfn(f)
    x = np.asarray(x, dtype=float)
    flat = np.atleast_1d(x).ravel()
    out = np.zeros(flat.shape)
    m = ctx.interior(flat)
    d = ctx.dist
    if np.any(m):
        xs = flat[m]
        if d.is_discrete:
            lo, hi = d.effective_range(extra=xs)
            us = np.arange(lo, hi + 1, dtype=float)
            df = np.asarray(delta(-ctx.ell, f, us), dtype=float)
            kmat = k_kernel(ctx, us[None, :], xs[:, None])
            terms = np.where(kmat > 0, kmat * df[None, :], 0.0)
            out[m] = [math.fsum(row.tolist()) for row in terms]
        else:
            a, b = d.support
            k = xs.size

            def integrand(u, owner):
                kv = np.asarray(k_kernel(ctx, u, xs[owner % k]), dtype=float)
                out = np.zeros(u.shape)
                live = kv > 0
                if np.any(live):
                    out[live] = kv[live] * np.asarray(delta(0, f, u[live], d.support), dtype=float)
                return out
            # split at x: K has a kink on the diagonal
            vals, _ = integrate_batch(integrand, np.concatenate([np.full(k, a), xs]),
                                      np.concatenate([xs, np.full(k, b)]), ctx.op_tol, d.scale)
            out[m] = vals[:k] + vals[k:]
    return _out(x, out)


def repr_two(ctx: SteinContext, f, x):
    """-L f(x) through the kernel: E[K(X, x) / (p(X) p(x)) Delta^{-ell} f(X)]."""
    x = np.asarray(x, dtype=float)
    flat = np.atleast_1d(x).ravel()
    num = np.atleast_1d(kernel_transform(ctx, f, flat))
    px = ctx.p(flat)
    with np.errstate(all="ignore"):
        out = np.where(ctx.interior(flat) & (px > 0), num / np.where(px > 0, px, 1.0), 0.0)
    return _out(x, out)


# ---------------------------------------------------------------- Stein equation

def stein_solution(ctx: SteinContext, h, eta, x):
    """g(x) = L h(x + ell) / L eta(x + ell); 0 when x + ell is off the support."""
    h, eta = as_realfn(h), as_realfn(eta)
    x = np.asarray(x, dtype=float)
    flat = np.atleast_1d(x).ravel()
    y = flat + int(ctx.ell)
    out = np.zeros(flat.shape)
    m = ctx.interior(y)
    if np.any(m):
        num = np.atleast_1d(inverse_apply(ctx, h, y[m]))
        den = np.atleast_1d(inverse_apply(ctx, eta, y[m]))
        a, b = ctx.dist.support
        structural = np.zeros(num.shape, dtype=bool)
        if ctx.ell == LatticeKind.FORWARD:
            structural = y[m] == a
        elif ctx.ell == LatticeKind.BACKWARD:
            structural = y[m] == b
        zero = den == 0
        if np.any(zero & ~structural):
            loc = float(flat[m][zero & ~structural][0])
            raise DivisionByZeroWeight(f"L[{eta.name}] vanishes at interior point x = {loc!r}", loc)
        with np.errstate(all="ignore"):
            out[m] = np.where(zero, 0.0, num / np.where(zero, 1.0, den))
    return _out(x, out)


def solution_fn(ctx: SteinContext, h, eta) -> RealFn:
    h, eta = as_realfn(h), as_realfn(eta)
    return RealFn(lambda x: stein_solution(ctx, h, eta, x), None, f"g[{h.name},{eta.name}]")


def standardized_apply(ctx: SteinContext, eta, g, x):
    """(eta(x) - E eta) g(x) + L eta(x) Delta^{-ell} g(x)."""
    eta, g = as_realfn(eta), as_realfn(g)
    x = np.asarray(x, dtype=float)
    e = ctx.expect(eta)
    leta = np.asarray(inverse_apply(ctx, eta, x), dtype=float)
    dg = np.asarray(delta(-ctx.ell, g, x, ctx.dist.support), dtype=float)
    val = (np.asarray(eta(x)) - e) * np.asarray(g(x)) + leta * dg
    return float(val) if np.ndim(val) == 0 else val


# ---------------------------------------------------------------- self-adjoint operator

def clamp_to_support(ctx: SteinContext, h) -> RealFn:
    """h extended by its boundary values outside a finite support.

    With this extension Delta^{-ell} h vanishes across the boundary, which is
    the convention under which R below is self-adjoint.
    """
    h = as_realfn(h)
    a, b = ctx.dist.support
    if ctx.ell == LatticeKind.CONTINUOUS:
        return h
    return RealFn(lambda x: h(np.clip(np.asarray(x, dtype=float), a, b)), None, f"clamp[{h.name}]")


def selfadjoint_apply(ctx: SteinContext, h, x):
    """R h(x) = T(Delta^{-ell} h)(x), with h clamped to the support."""
    hc = clamp_to_support(ctx, h)
    support = ctx.dist.support
    minus = -ctx.ell
    dh = RealFn(lambda u: delta(minus, hc, u, support), None, f"D[{hc.name}]")
    if ctx.ell == LatticeKind.CONTINUOUS and hc.derivative is not None:
        dh = RealFn(hc.derivative, None, dh.name)
    return canonical_apply(ctx, dh, x)


# ---------------------------------------------------------------- Menz-Otto

def _check_log_concave(ctx: SteinContext, points=None):
    """Raise NotLogConcave unless -Delta^{-ell} score > 0 on the check points."""
    pts = ctx.grid() if points is None else np.asarray(points, dtype=float)
    if ctx.dist.is_discrete:
        pts = pts[ctx.inside(pts)]
    else:
        pts = pts[ctx.interior(pts)]
    curv = -np.asarray(score_slope(ctx, pts), dtype=float)
    bad = ~(curv > 0)
    if np.any(bad):
        w = float(pts[bad][0])
        raise NotLogConcave(f"-Delta^{{-ell}} score is {curv[bad][0]:.3g} at x = {w!r}", w)
    return pts


def menz_otto_density(ctx: SteinContext, xp: float) -> RealFn:
    """x -> K(x, x') / p(x') * (-Delta^{-ell} score(x))."""
    _check_log_concave(ctx)
    pxp = float(ctx.p(xp))
    if not pxp > 0:
        raise InvalidParameter(f"x' = {xp!r} is outside the support")

    def fn(x):
        x = np.asarray(x, dtype=float)
        curv = -np.asarray(score_slope(ctx, x), dtype=float)
        kv = np.asarray(k_kernel(ctx, x, xp))
        with np.errstate(all="ignore"):
            return np.where(ctx.inside(x) & (kv > 0), kv * curv / pxp, 0.0)
    return RealFn(fn, None, f"menz_otto[{xp!r}]")


def menz_otto_mass(ctx: SteinContext, xp: float) -> float:
    """Total mass of the Menz-Otto density (1 when the law is log-concave)."""
    dens = menz_otto_density(ctx, xp)
    d = ctx.dist
    if d.is_discrete:
        from .numerics import sum_interval
        return sum_interval(dens, d.support[0], d.support[1], ctx.op_tol.tail_tol, start=d.mode)
    a, b = d.support
    vals, _ = integrate_batch(lambda u, o: dens(u), np.array([a, xp]), np.array([xp, b]),
                              Tolerance(abs=1e-13, rel=1e-11, max_subdiv=4000), d.scale)
    return math.fsum(vals.tolist())


def canonical_inverse_defect(ctx: SteinContext, f, x):
    """Boundary term D in L(T f)(x) = f(x) - D(x).

    D(x) = [(f p)(a - b_ell) P(X >= x + b_ell) + (f p)(b + a_ell) P(X <= x - a_ell)] / p(x),
    which vanishes when f p vanishes at both ends.  The end products are
    limits for continuous laws and infinite discrete ends.
    """
    from .verify import endpoint_limit
    f = as_realfn(f)
    d = ctx.dist
    a, b = d.support
    fp = lambda u: np.asarray(f(u)) * ctx.p(u)

    def end_product(z, side):
        if d.is_discrete and np.isfinite(z):
            return float(f(z)) * float(ctx.p(z))
        return endpoint_limit(ctx, fp, side)
    left = end_product(a - ctx.b_shift, "left")
    right = end_product(b + ctx.a_shift, "right")
    x = np.asarray(x, dtype=float)
    low = np.asarray(lower_mass(ctx, x), dtype=float)
    px = ctx.p(x)
    with np.errstate(all="ignore"):
        val = np.where(ctx.inside(x), (left * (1.0 - low) + right * low) / px, 0.0)
    return float(val) if np.ndim(val) == 0 else val
