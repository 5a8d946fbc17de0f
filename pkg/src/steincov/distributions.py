"""Univariate laws and the built-in families with closed-form Stein kernels.

Family ids and parameter order (a stable public contract):

    normal(mu, sigma2)          beta(alpha, beta)        gamma(alpha, scale)
    student(nu)                 fdist(d1, d2)            logistic(loc, scale)
    poisson(lam)                binomial(n, theta)       negbinomial(r, p)
    hypergeom(n, K, N)          neghypergeom(N, K, r)

Discrete Stein kernels are stored for both lattice kinds; the quadratic
coefficient triple (delta, beta, gamma) of a family describes its kernel
for ell = -1 (discrete) or ell = 0 (continuous).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np
from scipy import special as sc

from .errors import InvalidParameter
from .lattice import LatticeKind, RealFn

LOG_DROP = 700.0  # effective discrete range: log-pmf within this of the mode


@dataclass(frozen=True)
class PearsonOrdTriple:
    delta: float
    beta: float
    gamma: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (self.delta * x + self.beta) * x + self.gamma

    def as_tuple(self):
        return (self.delta, self.beta, self.gamma)


@dataclass(frozen=True, eq=False)
class Distribution:
    name: str
    kind: str  # "discrete" | "continuous"
    support: tuple
    pdf: Callable
    params: tuple = ()
    logpdf: Optional[Callable] = None
    cdf: Optional[Callable] = None
    sf: Optional[Callable] = None
    ppf: Optional[Callable] = None
    mean_value: Optional[float] = None
    variance_value: Optional[float] = None
    sampler: Optional[Callable] = None
    score_fn: Optional[Callable] = None  # d/dx log p (continuous)
    score_derivative: Optional[Callable] = None
    kernels: dict = field(default_factory=dict)  # ell -> tau^ell
    triple: Optional[PearsonOrdTriple] = None
    exact_pmf: Optional[Callable] = None  # x -> Fraction, finite discrete only
    mode_hint: Optional[float] = None
    pmf_ratio: Optional[Callable] = None  # x -> p(x+1)/p(x), exact recurrence
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        a, b = self.support
        if not a < b:
            raise InvalidParameter(f"support endpoints must satisfy a < b, got {self.support}")
        if self.kind not in ("discrete", "continuous"):
            raise InvalidParameter(f"kind must be 'discrete' or 'continuous', got {self.kind!r}")
        if self.kind == "discrete":
            for e in (a, b):
                if np.isfinite(e) and e != round(e):
                    raise InvalidParameter("discrete support endpoints must be integers")

    # --- basic queries
    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"

    @property
    def finite_support(self) -> bool:
        return bool(np.isfinite(self.support[0]) and np.isfinite(self.support[1]))

    def in_support(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.support
        inside = (x >= a) & (x <= b)
        if self.is_discrete:
            inside &= x == np.round(x)
        return inside

    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.logpdf is not None:
            with np.errstate(all="ignore"):
                out = np.where(self.in_support(x), self.logpdf(x), -np.inf)
        else:
            with np.errstate(divide="ignore"):
                out = np.log(self.pdf(x))
        return out

    def compatible(self, ell) -> bool:
        ell = LatticeKind.parse(ell)
        return (ell == LatticeKind.CONTINUOUS) != self.is_discrete

    # --- cached moments
    def _cached(self, key, fn):
        if key not in self._cache:
            self._cache.setdefault(key, fn())
        return self._cache[key]

    @property
    def mean(self) -> float:
        if self.mean_value is not None:
            return self.mean_value
        from .numerics import OPERATOR_TOL, expectation
        return self._cached("mean", lambda: expectation(self, lambda x: x, OPERATOR_TOL))

    @property
    def variance(self) -> float:
        if self.variance_value is not None:
            return self.variance_value
        from .numerics import OPERATOR_TOL, expectation
        m = self.mean
        return self._cached("variance",
                            lambda: expectation(self, lambda x: (x - m) ** 2, OPERATOR_TOL))

    @property
    def mode(self) -> float:
        if self.mode_hint is not None:
            return self.mode_hint
        return self._cached("mode", self._find_mode)

    def _find_mode(self):
        a, b = self.support
        if self.is_discrete:
            lo = a if np.isfinite(a) else -1000.0
            hi = b if np.isfinite(b) else lo + 100000.0
            xs = np.arange(lo, min(hi, lo + 100000.0) + 1)
            return float(xs[np.argmax(self.log_pdf(xs))])
        return float(self.quantile(0.5))

    @property
    def scale(self) -> float:
        """Spread used to scale the infinite-range change of variables."""
        def compute():
            try:
                q1, q3 = self.quantile(np.array([0.25, 0.75]))
                s = float(q3 - q1) / 1.349
            except Exception:  # custom law without a usable quantile
                s = 1.0
            return s if np.isfinite(s) and s > 0 else 1.0
        return self._cached("scale", compute)

    def breakpoints(self) -> list:
        """Interior points used as an initial partition by quadrature."""
        def compute():
            try:
                pts = self.quantile(np.array([1e-4, 0.05, 0.3, 0.5, 0.7, 0.95, 1 - 1e-4]))
                a, b = self.support
                return sorted({float(p) for p in pts if a < p < b and np.isfinite(p)})
            except Exception:
                return []
        return self._cached("breakpoints", compute)

    # --- distribution functions with numeric fallbacks
    def cdf_values(self, x):
        x = np.asarray(x, dtype=float)
        if self.cdf is not None:
            return np.asarray(self.cdf(x), dtype=float)
        return self._numeric_cdf(x)

    def sf_values(self, x):
        x = np.asarray(x, dtype=float)
        if self.sf is not None:
            return np.asarray(self.sf(x), dtype=float)
        if self.cdf is not None:
            return 1.0 - np.asarray(self.cdf(x), dtype=float)
        return self._numeric_cdf(x, upper=True)

    def _numeric_cdf(self, x, upper=False):
        from .numerics import OPERATOR_TOL, integrate_batch
        a, b = self.support
        flat = np.atleast_1d(x).ravel()
        if self.is_discrete:
            lo, hi = self.effective_range(extra=flat[np.isfinite(flat)])
            xs = np.arange(lo, hi + 1, dtype=float)
            p = self.pdf(xs)
            cum = np.cumsum(p)
            tail = np.cumsum(p[::-1])[::-1]
            fl = np.floor(flat)
            idx = np.clip(fl - lo, -1, xs.size - 1).astype(int)
            if upper:
                nxt = np.clip(idx + 1, 0, xs.size)
                vals = np.where(nxt >= xs.size, 0.0, tail[np.minimum(nxt, xs.size - 1)])
            else:
                vals = np.where(idx < 0, 0.0, cum[np.maximum(idx, 0)])
            return vals.reshape(np.shape(x))
        xc = np.clip(flat, a, b)
        if upper:
            los, his = xc, np.full(xc.shape, b)
        else:
            los, his = np.full(xc.shape, a), xc

        def g(u, owner):
            with np.errstate(all="ignore"):
                return np.nan_to_num(self.pdf(u), nan=0.0, posinf=0.0)
        vals, _ = integrate_batch(g, los, his, OPERATOR_TOL, 1.0)
        return np.clip(vals, 0.0, 1.0).reshape(np.shape(x))

    def quantile(self, q):
        """Quantile function (smallest support point with cdf >= q when discrete)."""
        q = np.asarray(q, dtype=float)
        if self.ppf is not None:
            return np.asarray(self.ppf(q), dtype=float)
        from .numerics import _invert_cdf
        if self.cdf is not None:
            return _invert_cdf(self, q)
        if self.is_discrete:
            lo, hi = self.effective_range()
            xs = np.arange(lo, hi + 1, dtype=float)
            cum = np.cumsum(self.pdf(xs))
            return xs[np.minimum(np.searchsorted(cum, q * cum[-1], side="left"), xs.size - 1)]
        proxy = _CdfProxy(self)
        return _invert_cdf(proxy, q)

    def effective_range(self, drop: float = LOG_DROP, extra=None) -> tuple:
        """Integer range holding all mass within exp(-drop) of the mode.

        ``extra`` points are included and the range is extended until the
        log-pmf also falls ``40`` below the smallest log-pmf among them.
        """
        if not self.is_discrete:
            raise InvalidParameter("effective_range applies to discrete laws")
        a, b = self.support
        m = float(self.mode)
        lm = float(self.log_pdf(m))
        floor = lm - drop
        if extra is not None and np.size(extra):
            ex = np.asarray(extra, dtype=float)
            ex = ex[self.in_support(ex)]
            if ex.size:
                floor = min(floor, float(np.min(self.log_pdf(ex))) - 40.0)
                a_need, b_need = float(np.min(ex)), float(np.max(ex))
            else:
                a_need, b_need = m, m
        else:
            a_need, b_need = m, m
        lo = a if np.isfinite(a) else self._walk(min(m, a_need), -1, floor)
        hi = b if np.isfinite(b) else self._walk(max(m, b_need), +1, floor)
        return int(lo), int(hi)

    def _walk(self, start, direction, floor):
        pos, step = float(start), 64.0
        while True:
            xs = pos + direction * np.arange(1, int(step) + 1)
            lp = self.log_pdf(xs)
            below = np.flatnonzero(lp < floor)
            if below.size:
                return float(xs[below[0]])
            pos = float(xs[-1])
            step = min(step * 2, 1 << 20)

    @classmethod
    def from_pdf(cls, pdf: Callable, support, kind: str = "continuous", logpdf=None,
                 name: str = "custom", **extra) -> "Distribution":
        """A law known only through its density (cdf, moments, sampler all derived numerically)."""
        f = pdf if isinstance(pdf, RealFn) else RealFn(pdf)
        a, b = float(support[0]), float(support[1])

        def safe_pdf(x):
            x = np.asarray(x, dtype=float)
            inside = (x >= a) & (x <= b)
            if kind == "discrete":
                inside &= x == np.round(x)
            with np.errstate(all="ignore"):
                v = np.where(inside, f(np.where(inside, x, 0.5 * (a + b) if np.isfinite(a + b) else 0.0)), 0.0)
            return v
        return cls(name=name, kind=kind, support=(a, b), pdf=safe_pdf, logpdf=logpdf, **extra)


class _CdfProxy:
    """Minimal adaptor so cdf inversion works with a numerically integrated cdf."""

    def __init__(self, d):
        self._d = d
        self.support = d.support
        self.is_discrete = d.is_discrete
        self.mode = 0.0

    def cdf(self, x):
        return self._d.cdf_values(x)


# ---------------------------------------------------------------- families

def _need(cond, msg):
    if not cond:
        raise InvalidParameter(msg)


def _int_param(v, name):
    _need(float(v) == int(round(float(v))), f"{name} must be an integer, got {v!r}")
    return int(round(float(v)))


def _ratio(v) -> Fraction:
    return Fraction(repr(float(v))) if not isinstance(v, (int, Fraction)) else Fraction(v)


def _const(c):
    return lambda x: np.full(np.shape(x), float(c))


def _normal(mu, sigma2):
    _need(sigma2 > 0, "normal requires sigma2 > 0")
    s = math.sqrt(sigma2)

    def logpdf(x):
        return -0.5 * (x - mu) ** 2 / sigma2 - 0.5 * math.log(2 * math.pi * sigma2)
    return Distribution(
        name="normal", kind="continuous", support=(-np.inf, np.inf), params=(mu, sigma2),
        pdf=lambda x: np.exp(logpdf(np.asarray(x, dtype=float))), logpdf=logpdf,
        cdf=lambda x: sc.ndtr((x - mu) / s), sf=lambda x: sc.ndtr((mu - x) / s),
        ppf=lambda q: mu + s * sc.ndtri(q), mean_value=mu, variance_value=sigma2,
        sampler=lambda g, n: g.normal(mu, s, n),
        score_fn=lambda x: -(x - mu) / sigma2, score_derivative=_const(-1.0 / sigma2),
        kernels={0: _const(sigma2)}, triple=PearsonOrdTriple(0.0, 0.0, sigma2), mode_hint=mu)


def _beta(al, be):
    _need(al > 0 and be > 0, "beta requires alpha > 0 and beta > 0")
    lb = sc.betaln(al, be)

    def logpdf(x):
        return sc.xlogy(al - 1, x) + sc.xlog1py(be - 1, -x) - lb

    def pdf(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            return np.where((x > 0) & (x < 1), np.exp(logpdf(x)), 0.0)
    t = al + be
    return Distribution(
        name="beta", kind="continuous", support=(0.0, 1.0), params=(al, be), pdf=pdf, logpdf=logpdf,
        cdf=lambda x: sc.betainc(al, be, np.clip(x, 0, 1)),
        sf=lambda x: sc.betainc(be, al, np.clip(1 - np.asarray(x, dtype=float), 0, 1)),
        ppf=lambda q: sc.betaincinv(al, be, q), mean_value=al / t,
        variance_value=al * be / (t * t * (t + 1)), sampler=lambda g, n: g.beta(al, be, n),
        score_fn=lambda x: (al - 1) / x - (be - 1) / (1 - x),
        score_derivative=lambda x: -(al - 1) / x ** 2 - (be - 1) / (1 - x) ** 2,
        kernels={0: lambda x: x * (1 - x) / t}, triple=PearsonOrdTriple(-1 / t, 1 / t, 0.0))


def _gamma(al, scale):
    _need(al > 0 and scale > 0, "gamma requires shape alpha > 0 and scale beta > 0")
    lg = sc.gammaln(al) + al * math.log(scale)

    def logpdf(x):
        return sc.xlogy(al - 1, x) - x / scale - lg

    def pdf(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            return np.where(x > 0, np.exp(logpdf(x)), 0.0)
    return Distribution(
        name="gamma", kind="continuous", support=(0.0, np.inf), params=(al, scale), pdf=pdf,
        logpdf=logpdf, cdf=lambda x: sc.gammainc(al, np.maximum(x, 0) / scale),
        sf=lambda x: sc.gammaincc(al, np.maximum(x, 0) / scale),
        ppf=lambda q: scale * sc.gammaincinv(al, q), mean_value=al * scale,
        variance_value=al * scale * scale, sampler=lambda g, n: g.gamma(al, scale, n),
        score_fn=lambda x: (al - 1) / x - 1 / scale, score_derivative=lambda x: -(al - 1) / x ** 2,
        kernels={0: lambda x: scale * x}, triple=PearsonOrdTriple(0.0, scale, 0.0))


def _student(nu):
    _need(nu > 0, "student requires nu > 0")
    c = -0.5 * math.log(nu) - sc.betaln(nu / 2, 0.5)

    def logpdf(x):
        return c - 0.5 * (nu + 1) * np.log1p(x * x / nu)
    kernels, triple, mean = {}, None, None
    if nu > 1:
        kernels = {0: lambda x: (x * x + nu) / (nu - 1)}
        triple = PearsonOrdTriple(1 / (nu - 1), 0.0, nu / (nu - 1))
        mean = 0.0
    return Distribution(
        name="student", kind="continuous", support=(-np.inf, np.inf), params=(nu,),
        pdf=lambda x: np.exp(logpdf(np.asarray(x, dtype=float))), logpdf=logpdf,
        cdf=lambda x: sc.stdtr(nu, x), sf=lambda x: sc.stdtr(nu, -np.asarray(x, dtype=float)),
        ppf=lambda q: sc.stdtrit(nu, q), mean_value=mean,
        variance_value=(nu / (nu - 2) if nu > 2 else (np.inf if nu > 1 else None)),
        sampler=lambda g, n: g.standard_t(nu, n),
        score_fn=lambda x: -(nu + 1) * x / (nu + x * x),
        score_derivative=lambda x: -(nu + 1) * (nu - x * x) / (nu + x * x) ** 2,
        kernels=kernels, triple=triple, mode_hint=0.0)


def _fdist(d1, d2):
    _need(d1 > 0 and d2 > 0, "fdist requires d1 > 0 and d2 > 0")
    c = 0.5 * d1 * math.log(d1 / d2) - sc.betaln(d1 / 2, d2 / 2)

    def logpdf(x):
        return c + sc.xlogy(d1 / 2 - 1, x) - 0.5 * (d1 + d2) * np.log1p(d1 * x / d2)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            return np.where(x > 0, np.exp(logpdf(x)), 0.0)
    kernels, triple = {}, None
    if d2 > 2:
        k = d1 * (d2 - 2)
        kernels = {0: lambda x: 2 * x * (d1 * x + d2) / k}
        triple = PearsonOrdTriple(2 * d1 / k, 2 * d2 / k, 0.0)
    mean = d2 / (d2 - 2) if d2 > 2 else None
    var = 2 * d2 * d2 * (d1 + d2 - 2) / (d1 * (d2 - 2) ** 2 * (d2 - 4)) if d2 > 4 else None
    return Distribution(
        name="fdist", kind="continuous", support=(0.0, np.inf), params=(d1, d2), pdf=pdf,
        logpdf=logpdf, cdf=lambda x: sc.fdtr(d1, d2, np.maximum(x, 0)),
        sf=lambda x: sc.fdtrc(d1, d2, np.maximum(x, 0)), ppf=lambda q: sc.fdtri(d1, d2, q),
        mean_value=mean, variance_value=var, sampler=lambda g, n: g.f(d1, d2, n),
        score_fn=lambda x: (d1 / 2 - 1) / x - 0.5 * (d1 + d2) * d1 / (d2 + d1 * x),
        score_derivative=lambda x: -(d1 / 2 - 1) / x ** 2 + 0.5 * (d1 + d2) * d1 * d1 / (d2 + d1 * x) ** 2,
        kernels=kernels, triple=triple)


def _logistic(loc, s):
    _need(s > 0, "logistic requires scale > 0")

    def logpdf(x):
        z = (np.asarray(x, dtype=float) - loc) / s
        return -np.abs(z) - 2 * np.log1p(np.exp(-np.abs(z))) - math.log(s)
    return Distribution(
        name="logistic", kind="continuous", support=(-np.inf, np.inf), params=(loc, s),
        pdf=lambda x: np.exp(logpdf(x)), logpdf=logpdf,
        cdf=lambda x: sc.expit((x - loc) / s), sf=lambda x: sc.expit((loc - x) / s),
        ppf=lambda q: loc + s * sc.logit(q), mean_value=loc, variance_value=(math.pi * s) ** 2 / 3,
        sampler=lambda g, n: g.logistic(loc, s, n),
        score_fn=lambda x: -np.tanh((x - loc) / (2 * s)) / s,
        score_derivative=lambda x: -0.5 / (s * s * np.cosh((x - loc) / (2 * s)) ** 2),
        mode_hint=loc)


def _discrete(name, params, support, logpmf, **kw):
    a, b = support

    def pdf(x):
        x = np.asarray(x, dtype=float)
        inside = (x >= a) & (x <= b) & (x == np.round(x))
        with np.errstate(all="ignore"):
            return np.where(inside, np.exp(logpmf(np.where(inside, x, a if np.isfinite(a) else 0.0))), 0.0)
    return Distribution(name=name, kind="discrete", support=(float(a), float(b)), params=params,
                        pdf=pdf, logpdf=logpmf, **kw)


def _discrete_ppf(d_cdf, d_sf, lo, hi):
    """Quantile for a discrete law from its cdf/sf on [lo, hi] (sf used above the median)."""
    cache = {}

    def ppf(q):
        q = np.asarray(q, dtype=float)
        if "xs" not in cache:
            xs = np.arange(lo, hi + 1, dtype=float)
            cache["xs"], cache["cdf"], cache["sf"] = xs, d_cdf(xs), d_sf(xs)
        xs, cdf, sf_ = cache["xs"], cache["cdf"], cache["sf"]
        out = np.empty(q.shape)
        flat = q.ravel()
        res = np.empty(flat.shape)
        low = flat <= 0.5
        res[low] = xs[np.minimum(np.searchsorted(cdf, flat[low], side="left"), xs.size - 1)]
        # smallest x with sf(x) <= 1 - q; sf is non-increasing
        neg = -sf_
        res[~low] = xs[np.minimum(np.searchsorted(neg, -(1 - flat[~low]), side="left"), xs.size - 1)]
        out[...] = res.reshape(q.shape)
        return out
    return ppf


def _poisson(lam):
    _need(lam > 0, "poisson requires lambda > 0")
    ll = math.log(lam)
    logpmf = lambda x: x * ll - lam - sc.gammaln(x + 1)
    hi = int(lam + 40 * math.sqrt(lam) + 200)
    cdf = lambda x: np.where(np.asarray(x) < 0, 0.0, sc.pdtr(np.floor(np.maximum(x, 0)), lam))
    sf = lambda x: np.where(np.asarray(x) < 0, 1.0, sc.pdtrc(np.floor(np.maximum(x, 0)), lam))
    return _discrete(
        "poisson", (lam,), (0, np.inf), logpmf, cdf=cdf, sf=sf, ppf=_discrete_ppf(cdf, sf, 0, hi),
        mean_value=lam, variance_value=lam, sampler=lambda g, n: g.poisson(lam, n).astype(float),
        kernels={-1: _const(lam), 1: lambda x: np.asarray(x, dtype=float) + 0.0},
        triple=PearsonOrdTriple(0.0, 0.0, lam), mode_hint=float(math.floor(lam)),
        pmf_ratio=lambda x: lam / (np.asarray(x, dtype=float) + 1))


def _binomial(n, th):
    n = _int_param(n, "binomial n")
    _need(n >= 1, "binomial requires n >= 1")
    _need(0 < th < 1, "binomial requires 0 < theta < 1")
    c = sc.gammaln(n + 1)
    logpmf = lambda x: c - sc.gammaln(x + 1) - sc.gammaln(n - x + 1) + x * math.log(th) + (n - x) * math.log1p(-th)
    cdf = lambda x: np.where(np.asarray(x) < 0, 0.0, sc.bdtr(np.clip(np.floor(x), 0, n), n, th))
    sf = lambda x: np.where(np.asarray(x) < 0, 1.0, sc.bdtrc(np.clip(np.floor(x), 0, n), n, th))
    thf = _ratio(th)

    def exact(x):
        x = int(x)
        if not 0 <= x <= n:
            return Fraction(0)
        return math.comb(n, x) * thf ** x * (1 - thf) ** (n - x)
    return _discrete(
        "binomial", (n, th), (0, n), logpmf, cdf=cdf, sf=sf, ppf=_discrete_ppf(cdf, sf, 0, n),
        mean_value=n * th, variance_value=n * th * (1 - th),
        sampler=lambda g, m: g.binomial(n, th, m).astype(float),
        kernels={-1: lambda x: th * (n - np.asarray(x, dtype=float)), 1: lambda x: (1 - th) * np.asarray(x, dtype=float)},
        triple=PearsonOrdTriple(0.0, -th, n * th), exact_pmf=exact,
        mode_hint=float(min(n, math.floor((n + 1) * th))),
        pmf_ratio=lambda x: (n - np.asarray(x, dtype=float)) * th / ((np.asarray(x, dtype=float) + 1) * (1 - th)))


def _negbinomial(r, p):
    _need(r > 0, "negbinomial requires r > 0")
    _need(0 < p < 1, "negbinomial requires 0 < p < 1")
    c = r * math.log(p) - sc.gammaln(r)
    logpmf = lambda x: c + sc.gammaln(x + r) - sc.gammaln(x + 1) + x * math.log1p(-p)
    cdf = lambda x: np.where(np.asarray(x) < 0, 0.0, sc.betainc(r, np.floor(np.maximum(x, 0)) + 1, p))
    sf = lambda x: np.where(np.asarray(x) < 0, 1.0, sc.betainc(np.floor(np.maximum(x, 0)) + 1, r, 1 - p))
    q = 1 - p
    hi = int((r * q / p) + 60 * math.sqrt(r * q) / p + 400)
    return _discrete(
        "negbinomial", (r, p), (0, np.inf), logpmf, cdf=cdf, sf=sf, ppf=_discrete_ppf(cdf, sf, 0, hi),
        mean_value=r * q / p, variance_value=r * q / p ** 2,
        sampler=lambda g, n: g.negative_binomial(r, p, n).astype(float),
        kernels={-1: lambda x: q * (r + np.asarray(x, dtype=float)) / p, 1: lambda x: np.asarray(x, dtype=float) / p},
        triple=PearsonOrdTriple(0.0, q / p, r * q / p),
        mode_hint=float(math.floor((r - 1) * q / p)) if r > 1 else 0.0,
        pmf_ratio=lambda x: (np.asarray(x, dtype=float) + r) * q / (np.asarray(x, dtype=float) + 1))


def _finite_table_law(name, params, lo, hi, exact, **kw):
    """Finite discrete law whose pmf is given exactly; float pmf derived from the exact one."""
    xs = np.arange(lo, hi + 1)
    probs = np.array([float(exact(int(x))) for x in xs])
    logp = np.log(probs)
    cum = np.cumsum(probs)
    tail = np.cumsum(probs[::-1])[::-1]

    def logpmf(x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(x - lo, 0, hi - lo).astype(int)
        return np.where((x >= lo) & (x <= hi), logp[idx], -np.inf)

    def cdf(x):
        f = np.floor(np.asarray(x, dtype=float))
        idx = np.clip(f - lo, 0, hi - lo).astype(int)
        return np.where(f < lo, 0.0, np.where(f >= hi, 1.0, cum[idx]))

    def sf(x):
        f = np.floor(np.asarray(x, dtype=float))
        idx = np.clip(f - lo + 1, 0, hi - lo).astype(int)
        return np.where(f < lo, 1.0, np.where(f >= hi, 0.0, tail[idx]))
    return _discrete(name, params, (lo, hi), logpmf, cdf=cdf, sf=sf, ppf=_discrete_ppf(cdf, sf, lo, hi),
                     exact_pmf=exact, mode_hint=float(xs[np.argmax(probs)]), **kw)


def _hypergeom(n, K, N):
    n, K, N = _int_param(n, "hypergeom n"), _int_param(K, "hypergeom K"), _int_param(N, "hypergeom N")
    _need(1 <= K <= N, "hypergeom requires 1 <= K <= N")
    _need(1 <= n <= N, "hypergeom requires 1 <= n <= N")
    lo, hi = max(0, n + K - N), min(n, K)
    total = math.comb(N, n)

    def exact(x):
        x = int(x)
        if not lo <= x <= hi:
            return Fraction(0)
        return Fraction(math.comb(K, x) * math.comb(N - K, n - x), total)
    return _finite_table_law(
        "hypergeom", (n, K, N), lo, hi, exact, mean_value=n * K / N,
        variance_value=n * K * (N - K) * (N - n) / (N * N * (N - 1)) if N > 1 else 0.0,
        sampler=lambda g, m: g.hypergeometric(K, N - K, n, m).astype(float),
        kernels={-1: lambda x: (K - np.asarray(x, dtype=float)) * (n - np.asarray(x, dtype=float)) / N,
                 1: lambda x: np.asarray(x, dtype=float) * (np.asarray(x, dtype=float) + N - K - n) / N},
        triple=PearsonOrdTriple(1 / N, -(n + K) / N, n * K / N))


def _neghypergeom(N, K, r):
    N, K, r = _int_param(N, "neghypergeom N"), _int_param(K, "neghypergeom K"), _int_param(r, "neghypergeom r")
    _need(0 <= K <= N, "neghypergeom requires 0 <= K <= N")
    _need(1 <= r <= N - K, "neghypergeom requires 1 <= r <= N - K")
    _need(K >= 1, "neghypergeom requires K >= 1 for a non-degenerate law")
    total = math.comb(N, K)

    def exact(x):
        x = int(x)
        if not 0 <= x <= K:
            return Fraction(0)
        return Fraction(math.comb(x + r - 1, x) * math.comb(N - r - x, K - x), total)
    m = N - K + 1
    return _finite_table_law(
        "neghypergeom", (N, K, r), 0, K, exact, mean_value=r * K / m,
        variance_value=r * K * (N + 1) * (N - K - r + 1) / (m * m * (m + 1)),
        kernels={-1: lambda x: (K - np.asarray(x, dtype=float)) * (r + np.asarray(x, dtype=float)) / m,
                 1: lambda x: np.asarray(x, dtype=float) * (N - r + 1 - np.asarray(x, dtype=float)) / m},
        triple=PearsonOrdTriple(-1 / m, (K - r) / m, r * K / m))


FAMILIES = {
    "normal": (_normal, 2), "beta": (_beta, 2), "gamma": (_gamma, 2), "student": (_student, 1),
    "fdist": (_fdist, 2), "logistic": (_logistic, 2), "poisson": (_poisson, 1),
    "binomial": (_binomial, 2), "negbinomial": (_negbinomial, 2), "hypergeom": (_hypergeom, 3),
    "neghypergeom": (_neghypergeom, 3),
}


def make_family(name: str, params) -> Distribution:
    """Build a built-in family from its id and positional parameters."""
    key = name.strip().lower()
    if key not in FAMILIES:
        raise InvalidParameter(f"unknown family {name!r}; known: {sorted(FAMILIES)}")
    ctor, arity = FAMILIES[key]
    params = [float(p) for p in (params if np.ndim(params) else [params])]
    if len(params) != arity:
        raise InvalidParameter(f"{key} takes {arity} parameter(s), got {len(params)}")
    if not all(np.isfinite(params)):
        raise InvalidParameter("parameters must be finite")
    return ctor(*params)


def closed_form_kernel(d: Distribution, ell) -> Optional[RealFn]:
    """The tabulated Stein kernel tau^ell of a built-in family, or None."""
    ell = LatticeKind.parse(ell)
    fn = d.kernels.get(int(ell))
    if fn is None:
        return None
    return RealFn(lambda x: np.asarray(fn(np.asarray(x, dtype=float)), dtype=float) * np.ones(np.shape(x)),
                  name=f"tau[{d.name},{int(ell)}]")


@dataclass
class ValidationReport:
    mass_error: float
    exact_mass: Optional[Fraction]
    cdf_pdf_max_error: Optional[float]
    positivity_violations: list
    triple_max_error: Optional[float]
    tol: float

    @property
    def ok(self) -> bool:
        if self.exact_mass is not None and self.tol == 0:
            mass_ok = self.exact_mass == 1
        else:
            mass_ok = self.mass_error <= max(self.tol, 1e-12)
        cdf_ok = self.cdf_pdf_max_error is None or self.cdf_pdf_max_error <= max(self.tol, 1e-8)
        return mass_ok and cdf_ok and not self.positivity_violations

    def as_dict(self):
        return {"ok": self.ok, "mass_error": self.mass_error,
                "exact_mass": None if self.exact_mass is None else str(self.exact_mass),
                "cdf_pdf_max_error": self.cdf_pdf_max_error,
                "positivity_violations": self.positivity_violations,
                "triple_max_error": self.triple_max_error, "tol": self.tol}


def validate(d: Distribution, tol: float = 1e-8) -> ValidationReport:
    """Check mass, cdf/pdf consistency and positivity. Never mutates d."""
    from .numerics import OPERATOR_TOL, Tolerance, expectation, integrate_batch, quantile_grid
    exact_mass = None
    positivity = []
    if d.is_discrete and d.finite_support and d.exact_pmf is not None:
        exact_mass = sum((d.exact_pmf(x) for x in range(int(d.support[0]), int(d.support[1]) + 1)),
                         Fraction(0))
        mass_error = abs(float(exact_mass - 1))
    else:
        try:
            q = Tolerance(abs=0.0, rel=max(min(tol, 1e-8), 1e-14), tail_tol=1e-16) if tol > 0 else OPERATOR_TOL
            mass_error = abs(expectation(d, lambda x: np.ones(np.shape(x)), q) - 1.0)
        except Exception as exc:  # report, never raise
            mass_error = float("inf")
            positivity.append(f"mass computation failed: {exc}")
    try:
        grid = quantile_grid(d, 1e-6, 1 - 1e-6, 64) if d.cdf is not None or d.ppf is not None else None
    except Exception:
        grid = None
    if grid is None:
        a, b = d.support
        lo = a if np.isfinite(a) else -10.0
        hi = b if np.isfinite(b) else 10.0
        grid = np.arange(lo, hi + 1) if d.is_discrete else np.linspace(lo, hi, 66)[1:-1]
    pv = np.asarray(d.pdf(grid))
    for x in grid[~(pv >= 0)]:
        positivity.append(float(x))
    cdf_err = None
    if d.cdf is not None:
        if d.is_discrete:
            diff = d.cdf(grid) - d.cdf(grid - 1) - d.pdf(grid)
            cdf_err = float(np.max(np.abs(diff)))
        else:
            lo_, hi_ = grid[:-1], grid[1:]
            ints, _ = integrate_batch(lambda u, o: d.pdf(u), lo_, hi_, OPERATOR_TOL)
            cdf_err = float(np.max(np.abs(d.cdf(hi_) - d.cdf(lo_) - ints)))
    triple_err = None
    if d.triple is not None:
        ell = -1 if d.is_discrete else 0
        k = d.kernels.get(ell)
        if k is not None:
            triple_err = float(np.max(np.abs(np.asarray(k(grid)) - d.triple(grid))))
    return ValidationReport(mass_error, exact_mass, cdf_err, positivity, triple_err, tol)
