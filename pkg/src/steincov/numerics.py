"""Expectation engine, sampling and a weighted symmetric eigensolver.

Continuous integrals use a vectorised adaptive 21-point Gauss-Kronrod rule.
The rule is open, so integrands are never evaluated at interval endpoints,
and infinite endpoints are handled with the map u = base +- s*t/(1-t).
Many integrals are advanced together: every interval carries an owner
index and convergence is judged per owner.

Discrete sums are exact (fsum) on finite ranges; infinite ranges are walked
outward from a start point until a geometric tail bound drops below
``tail_tol``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (DimensionMismatch, InvalidParameter, InvalidRange, NoConvergence,
                     NonFiniteValue, NotSampleable, NotSelfAdjoint)

EPS = np.finfo(float).eps

# Gauss-Kronrod (10, 21) abscissae and weights, nodes in decreasing order;
# the Kronrod extension interleaves the Gauss nodes (odd positions).
_XGK = np.array([
    0.9956571630258081, 0.9739065285171717, 0.9301574913557082, 0.8650633666889845,
    0.7808177265864169, 0.6794095682990244, 0.5627571346686047, 0.4333953941292472,
    0.2943928627014602, 0.14887433898163122, 0.0])
_WGK = np.array([
    0.011694638867371874, 0.032558162307964725, 0.054755896574351995, 0.07503967481091996,
    0.0931254545836976, 0.10938715880229764, 0.12349197626206584, 0.13470921731147334,
    0.14277593857706009, 0.14773910490133849, 0.1494455540029169])
_WG = np.array([0.06667134430868814, 0.1494513491505806, 0.21908636251598204,
                0.26926671930999635, 0.29552422471475287])

NODES = np.concatenate([-_XGK[:-1], [0.0], _XGK[:-1][::-1]])
KRONROD_W = np.concatenate([_WGK[:-1], [_WGK[-1]], _WGK[:-1][::-1]])
GAUSS_W = np.zeros(21)
GAUSS_W[1:10:2] = _WG
GAUSS_W[11:20:2] = _WG[::-1]


@dataclass(frozen=True)
class Tolerance:
    abs: float = 1e-10
    rel: float = 1e-8
    max_subdiv: int = 2000
    tail_tol: float = 1e-12

    def __post_init__(self):
        if self.abs < 0 or self.rel < 0 or self.tail_tol < 0:
            raise InvalidParameter("tolerances must be non-negative")
        if self.abs == 0 and self.rel == 0:
            raise InvalidParameter("at least one of abs, rel must be positive")
        if int(self.max_subdiv) < 1:
            raise InvalidParameter("max_subdiv must be a positive integer")

    def as_dict(self):
        return {"abs": self.abs, "rel": self.rel, "max_subdiv": int(self.max_subdiv),
                "tail_tol": self.tail_tol}


DEFAULT_TOL = Tolerance()
# tighter setting used inside operators, where results get divided by p(x)
OPERATOR_TOL = Tolerance(abs=0.0, rel=1e-13, max_subdiv=4000, tail_tol=1e-16)


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


@dataclass(frozen=True)
class RngState:
    """Seed plus algorithm token. Passed by value; every consumer builds its own stream."""
    seed: int = 0
    algorithm: str = "PCG64"

    def generator(self) -> np.random.Generator:
        if self.algorithm != "PCG64":
            raise InvalidParameter(f"unsupported algorithm {self.algorithm!r}")
        return np.random.Generator(np.random.PCG64(self.seed & 0xFFFFFFFFFFFFFFFF))

    def split(self, shard: int) -> "RngState":
        """Independent state for a parallel shard: seed XOR splitmix64(shard)."""
        return RngState((self.seed ^ _splitmix64(int(shard))) & 0xFFFFFFFFFFFFFFFF, self.algorithm)


# ---------------------------------------------------------------- quadrature

_IDENT, _RIGHT_INF, _LEFT_INF = 0, 1, 2


def _prepare(lo, hi, scale):
    """Turn (lo, hi) pairs into t-space intervals with a map kind, base and scale."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    scale = np.broadcast_to(np.asarray(scale, dtype=float), lo.shape)
    if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
        raise InvalidRange("need lo <= hi")
    rows = []  # (owner, kind, base, scale, tl, tr)
    for i in range(lo.size):
        a, b, s = lo.flat[i], hi.flat[i], scale.flat[i]
        if a == b:
            continue
        if np.isfinite(a) and np.isfinite(b):
            rows.append((i, _IDENT, 0.0, 1.0, a, b))
        elif np.isfinite(a):
            rows.append((i, _RIGHT_INF, a, s, 0.0, 1.0))
        elif np.isfinite(b):
            rows.append((i, _LEFT_INF, b, s, 0.0, 1.0))
        else:
            rows.append((i, _LEFT_INF, 0.0, s, 0.0, 1.0))
            rows.append((i, _RIGHT_INF, 0.0, s, 0.0, 1.0))
    if not rows:
        return None
    arr = np.array(rows, dtype=float)
    return (arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2], arr[:, 3],
            arr[:, 4], arr[:, 5])


def _map(kind, base, scale, t):
    """Map t-space nodes to u and return (u, du/dt)."""
    u = np.array(t, dtype=float, copy=True)
    jac = np.ones_like(u)
    with np.errstate(divide="ignore"):  # t rounding to 1 maps to infinity; callers reject it
        return _map_tails(kind, base, scale, t, u, jac)


def _map_tails(kind, base, scale, t, u, jac):
    r = kind == _RIGHT_INF
    if np.any(r):
        tt = t[r]
        u[r] = base[r] + scale[r] * tt / (1.0 - tt)
        jac[r] = scale[r] / (1.0 - tt) ** 2
    l = kind == _LEFT_INF
    if np.any(l):
        tt = t[l]
        u[l] = base[l] - scale[l] * tt / (1.0 - tt)
        jac[l] = scale[l] / (1.0 - tt) ** 2
    return u, jac


def _gk21(func, owner, kind, base, scale, tl, tr):
    centre = 0.5 * (tl + tr)
    hw = 0.5 * (tr - tl)
    t = centre[:, None] + hw[:, None] * NODES[None, :]
    m = t.shape[0]
    kk = np.repeat(kind, 21).reshape(m, 21)
    u, jac = _map(kk.ravel(), np.repeat(base, 21), np.repeat(scale, 21), t.ravel())
    vals = np.asarray(func(u, np.repeat(owner, 21)), dtype=float).reshape(m, 21)
    jac = jac.reshape(m, 21)
    with np.errstate(invalid="ignore"):
        # a node rounded onto infinity where the integrand already vanished contributes nothing
        f = np.where((vals == 0) & np.isinf(jac), 0.0, vals * jac)
    if not np.all(np.isfinite(f)):
        bad = np.flatnonzero(~np.isfinite(f.ravel()))[0]
        raise NonFiniteValue(f"non-finite integrand at u = {u[bad]!r}")
    res_k = hw * (f @ KRONROD_W)
    res_g = hw * (f @ GAUSS_W)
    absf = np.abs(f)
    resabs = np.abs(hw) * (absf @ KRONROD_W)
    mean = (res_k / np.where(hw == 0, 1.0, 2 * hw))[:, None]
    resasc = np.abs(hw) * (np.abs(f - mean) @ KRONROD_W)
    err = np.abs(res_k - res_g)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5)
    err = np.where((resasc != 0) & (err != 0), scaled, err)
    err = np.where(resabs > np.finfo(float).tiny / (50 * EPS), np.maximum(50 * EPS * resabs, err), err)
    return res_k, err, resabs


def integrate_batch(func: Callable, lo, hi, tol: Tolerance = DEFAULT_TOL, scale=1.0,
                    raise_on_fail: bool = True, group=None):
    """Integrate many integrals at once.

    ``func(u, owner)`` receives flat arrays of abscissae and owner indices
    (owner = position in ``lo``/``hi``) and returns integrand values.
    Owners sharing a ``group`` id are judged together: the tolerance applies
    to the group total rather than to each piece.
    Returns (values, error_estimates) arrays shaped like ``lo``.
    """
    lo = np.asarray(lo, dtype=float)
    shape = lo.shape
    n = lo.size
    total = np.zeros(n)
    total_err = np.zeros(n)
    prep = _prepare(lo.ravel(), np.asarray(hi, dtype=float).ravel(), np.broadcast_to(scale, shape).ravel())
    if prep is None:
        return total.reshape(shape), total_err.reshape(shape)
    owner, kind, base, sc, tl, tr = prep
    res, err, rabs = _gk21(func, owner, kind, base, sc, tl, tr)
    grp = np.arange(n) if group is None else np.asarray(group, dtype=int).ravel()
    ng = int(grp.max()) + 1 if n else 0
    counts = np.bincount(owner, minlength=n)
    failed = np.zeros(ng, dtype=bool)
    while True:
        I = np.bincount(owner, weights=res, minlength=n)
        E = np.bincount(owner, weights=err, minlength=n)
        gown = grp[owner]
        Ig = np.bincount(gown, weights=res, minlength=ng)
        Eg = np.bincount(gown, weights=err, minlength=ng)
        Ag = np.bincount(gown, weights=rabs, minlength=ng)
        gcount = np.bincount(gown, minlength=ng)
        target = np.maximum(tol.abs, tol.rel * np.abs(Ig))
        done = (Eg <= target) | (Eg <= 100 * EPS * Ag) | failed
        width_ok = (tr - tl) > 8 * EPS * np.maximum(np.abs(tl), np.abs(tr)) + 1e-300
        local = target[gown] / np.maximum(gcount[gown], 1)
        open_iv = ~done[gown] & width_ok
        split = open_iv & (err > local)
        # always split the worst interval of each unfinished group
        if np.any(open_iv):
            cand = np.where(open_iv, err, -1.0)
            order = np.lexsort((-cand, gown))
            first = np.ones(order.size, dtype=bool)
            first[1:] = gown[order][1:] != gown[order][:-1]
            worst = order[first]
            worst = worst[cand[worst] >= 0]
            split[worst] = True
        stuck = (~done) & (np.bincount(gown, weights=split.astype(float), minlength=ng) == 0)
        over = (~done) & (gcount >= tol.max_subdiv * np.maximum(np.bincount(grp, minlength=ng), 1))
        bad = stuck | over
        if np.any(bad):
            if raise_on_fail:
                k = int(np.flatnonzero(bad)[0])
                mem = np.flatnonzero(grp == k)
                raise NoConvergence(
                    f"adaptive quadrature did not converge on [{lo.ravel()[mem[0]]!r}, "
                    f"{np.asarray(hi).ravel()[mem[-1]]!r}]: error {Eg[k]:.3e} > target {target[k]:.3e}")
            failed |= bad
            split &= ~bad[gown]
        if not np.any(split):
            total[:] = I
            total_err[:] = E
            break
        keep = ~split
        mid = 0.5 * (tl[split] + tr[split])
        o2 = np.concatenate([owner[split], owner[split]])
        k2 = np.concatenate([kind[split], kind[split]])
        b2 = np.concatenate([base[split], base[split]])
        s2 = np.concatenate([sc[split], sc[split]])
        l2 = np.concatenate([tl[split], mid])
        r2 = np.concatenate([mid, tr[split]])
        nres, nerr, nabs = _gk21(func, o2, k2, b2, s2, l2, r2)
        owner = np.concatenate([owner[keep], o2])
        kind = np.concatenate([kind[keep], k2])
        base = np.concatenate([base[keep], b2])
        sc = np.concatenate([sc[keep], s2])
        tl = np.concatenate([tl[keep], l2])
        tr = np.concatenate([tr[keep], r2])
        res = np.concatenate([res[keep], nres])
        err = np.concatenate([err[keep], nerr])
        rabs = np.concatenate([rabs[keep], nabs])
        counts = np.bincount(owner, minlength=n)
    return total.reshape(shape), total_err.reshape(shape)


def integrate_interval(f: Callable, lo: float, hi: float, tol: Optional[Tolerance] = None,
                       points=None, scale: float = 1.0) -> float:
    """Integral of f over [lo, hi]; +-inf allowed. Endpoints are never evaluated.

    ``points`` are optional interior breakpoints used as the initial partition.
    """
    tol = tol or DEFAULT_TOL
    if lo > hi:
        raise InvalidRange(f"lo={lo!r} exceeds hi={hi!r}")
    if lo == hi:
        return 0.0
    cuts = [lo] + sorted(p for p in (points or []) if lo < p < hi) + [hi]
    if len(cuts) == 2 and not np.isfinite(lo) and not np.isfinite(hi):
        cuts = [lo, 0.0, hi]
    los, his = np.array(cuts[:-1]), np.array(cuts[1:])

    def g(u, owner):
        return np.asarray(f(u), dtype=float) * np.ones_like(u)

    vals, errs = integrate_batch(g, los, his, tol, scale, group=np.zeros(len(los), dtype=int))
    return math.fsum(vals.tolist())


def sum_interval(f: Callable, lo, hi, tail_tol: float = 1e-12, start=None, block: int = 256,
                 max_terms: int = 10_000_000, return_tail: bool = False):
    """Sum f(j) over the integers j in [lo, hi]; endpoints may be infinite.

    Finite ranges are summed exactly (fsum).  Infinite directions are walked
    in blocks from ``start`` until a geometric tail bound falls below
    tail_tol * max(1, |partial sum|).
    """
    if lo > hi:
        raise InvalidRange(f"lo={lo!r} exceeds hi={hi!r}")
    if np.isfinite(lo) and np.isfinite(hi):
        xs = np.arange(int(lo), int(hi) + 1, dtype=float)
        vals = np.atleast_1d(np.asarray(f(xs), dtype=float))
        if not np.all(np.isfinite(vals)):
            raise NonFiniteValue("non-finite summand")
        s = math.fsum(vals.tolist())
        return (s, 0.0) if return_tail else s
    if start is None:
        start = lo if np.isfinite(lo) else (hi if np.isfinite(hi) else 0)
    start = int(start)
    parts = []
    tails = []
    for direction in (+1, -1):
        end = hi if direction > 0 else lo
        pos = start if direction > 0 else start - 1
        if direction > 0 and pos > end:
            continue
        if direction < 0 and pos < end:
            continue
        n_done = 0
        tail = 0.0
        while True:
            if direction > 0:
                stop = pos + block - 1 if not np.isfinite(end) else min(pos + block - 1, int(end))
                xs = np.arange(pos, stop + 1, dtype=float)
                pos = stop + 1
            else:
                stop = pos - block + 1 if not np.isfinite(end) else max(pos - block + 1, int(end))
                xs = np.arange(pos, stop - 1, -1, dtype=float)
                pos = stop - 1
            vals = np.atleast_1d(np.asarray(f(xs), dtype=float))
            if not np.all(np.isfinite(vals)):
                raise NonFiniteValue("non-finite summand")
            parts.extend(vals.tolist())
            n_done += xs.size
            if np.isfinite(end) and ((direction > 0 and pos > end) or (direction < 0 and pos < end)):
                tail = 0.0
                break
            mags = np.abs(vals[-16:])
            if mags[-1] == 0.0 and np.all(mags[-4:] == 0.0):
                tail = 0.0
                break
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = mags[1:] / mags[:-1]
            r = np.nanmax(ratios) if ratios.size else np.inf
            scale_ = max(1.0, abs(math.fsum(parts)))
            if np.isfinite(r) and r < 1.0:
                tail = mags[-1] * r / (1.0 - r)
                if tail <= tail_tol * scale_:
                    break
            if n_done >= max_terms:
                raise NoConvergence("discrete tail did not fall below tail_tol")
        tails.append(tail)
    s = math.fsum(parts)
    return (s, float(sum(tails))) if return_tail else s


def expectation(d, f: Callable, tol: Optional[Tolerance] = None) -> float:
    """E[f(X)] for X ~ d."""
    tol = tol or DEFAULT_TOL

    def weighted(u):
        # f is only evaluated where the density is positive
        u = np.asarray(u, dtype=float)
        p = np.asarray(d.pdf(u), dtype=float) * np.ones(u.shape)
        out = np.zeros(u.shape)
        m = p > 0
        if np.any(m):
            fv = np.asarray(f(u[m]), dtype=float) * np.ones(int(np.count_nonzero(m)))
            with np.errstate(invalid="ignore", over="ignore"):
                out[m] = fv * p[m]
        return out

    if d.is_discrete:
        return sum_interval(weighted, d.support[0], d.support[1], tol.tail_tol, start=d.mode)
    return integrate_interval(weighted, d.support[0], d.support[1], tol,
                              points=d.breakpoints(), scale=d.scale)


def sample(d, n: int, rng: RngState) -> np.ndarray:
    """n i.i.d. draws from d; sampler, then ppf, then cdf bisection inversion."""
    gen = rng.generator()
    n = int(n)
    if d.sampler is not None:
        return np.asarray(d.sampler(gen, n), dtype=float)
    if d.ppf is not None:
        return np.asarray(d.ppf(gen.random(n)), dtype=float)
    if d.cdf is not None:
        return _invert_cdf(d, gen.random(n))
    raise NotSampleable(f"{d.name}: no sampler, quantile function or cdf")


def _invert_cdf(d, q):
    q = np.asarray(q, dtype=float)
    a, b = d.support
    if d.is_discrete:
        lo_i = int(a) if np.isfinite(a) else int(d.mode) - 1
        while np.isinf(a) and d.cdf(lo_i) > np.min(q):
            lo_i -= max(1, abs(lo_i))
        hi_i = int(b) if np.isfinite(b) else int(d.mode) + 1
        while np.isinf(b) and d.cdf(hi_i) < np.max(q):
            hi_i += max(1, abs(hi_i))
        xs = np.arange(lo_i, hi_i + 1, dtype=float)
        cdf = d.cdf(xs)
        idx = np.searchsorted(cdf, q, side="left")
        return xs[np.minimum(idx, xs.size - 1)]
    lo = np.full(q.shape, a if np.isfinite(a) else -1.0)
    hi = np.full(q.shape, b if np.isfinite(b) else 1.0)
    if np.isinf(a):
        while np.any(d.cdf(lo) > q):
            lo = np.where(d.cdf(lo) > q, 2 * lo, lo)
    if np.isinf(b):
        while np.any(d.cdf(hi) < q):
            hi = np.where(d.cdf(hi) < q, 2 * hi, hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = d.cdf(mid) < q
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 4 * EPS * np.maximum(1, np.abs(hi))):
            break
    return 0.5 * (lo + hi)


def quantile_grid(d, lo: float = 1e-6, hi: float = 1 - 1e-6, n: int = 512) -> np.ndarray:
    """Points spanning quantiles [lo, hi]; all lattice points in range when discrete."""
    if n < 2:
        raise InvalidParameter("grid needs at least two points")
    if not 0 < lo < hi < 1:
        raise InvalidParameter("need 0 < lo < hi < 1")
    if d.is_discrete:
        qs = d.quantile(np.array([lo, hi]))
        return np.arange(qs[0], qs[1] + 1, dtype=float)
    return np.asarray(d.quantile(np.linspace(lo, hi, n)), dtype=float)


def weighted_eigensystem(matrix, weights, check_tol: float = 1e-10):
    """Eigenpairs of a matrix self-adjoint for <u,v> = sum_i w_i u_i v_i.

    Returns eigenvalues in ascending order and eigenvectors (columns)
    orthonormal in the weighted inner product.
    """
    M = np.asarray(matrix, dtype=float)
    w = np.asarray(weights, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"matrix must be square, got shape {M.shape}")
    if w.shape != (M.shape[0],):
        raise DimensionMismatch(f"{w.size} weights for a {M.shape[0]}x{M.shape[0]} matrix")
    if np.any(~(w > 0)):
        raise InvalidParameter("weights must be positive")
    WM = w[:, None] * M
    asym = float(np.max(np.abs(WM - WM.T))) if M.size else 0.0
    scale = max(1.0, float(np.max(np.abs(WM)))) if M.size else 1.0
    if asym > check_tol * scale:
        raise NotSelfAdjoint(f"weighted asymmetry {asym:.3e} exceeds {check_tol:g}", asym)
    r = np.sqrt(w)
    S = r[:, None] * M / r[None, :]
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    return vals, vecs / r[:, None]
