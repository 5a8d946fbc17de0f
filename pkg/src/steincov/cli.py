"""Command-line frontend.

    steincov kernel  --family binomial --params 3,0.5 --ell +1
    steincov curves  --family normal --params 0,1 --xprime 0 --grid 1e-6,1-1e-6,512
    steincov bounds  --family gamma --params 2,1 --g square
    steincov table   --family beta --params 2,3
    steincov eigen   --family binomial --params 5,0.3 --ell +1
    steincov verify  --scope all --seed 7

Exit status: 0 pass, 1 numeric failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
import tempfile

import numpy as np

from . import bounds as B
from . import stein_core as S
from .distributions import closed_form_kernel, make_family
from .errors import InvalidParameter, NotExact, SteinError
from .lattice import LatticeKind, function_names, named_function
from .numerics import quantile_grid

COMMANDS = ("kernel", "bounds", "curves", "table", "eigen", "verify")
MOMENT_BATTERY = ("identity", "square", "cube", "atan")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- parsing

_NUM = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_EXPR = re.compile(rf"^\s*({_NUM})\s*(?:([+-])\s*({_NUM}))?\s*$")


def parse_number(text: str) -> float:
    """A float literal or a sum/difference of two, e.g. '1-1e-6'."""
    m = _EXPR.match(text)
    if not m:
        raise UsageError(f"not a number: {text!r}")
    val = float(m.group(1))
    if m.group(2):
        val = val + float(m.group(3)) if m.group(2) == "+" else val - float(m.group(3))
    return val


def parse_list(text: str) -> list:
    return [parse_number(t) for t in text.split(",") if t.strip()]


def parse_grid(text: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError("--grid takes lo,hi,n")
    lo, hi = parse_number(parts[0]), parse_number(parts[1])
    try:
        n = int(parts[2])
    except ValueError:
        raise UsageError(f"grid size must be an integer, got {parts[2]!r}") from None
    if n < 2:
        raise UsageError("grid size must be at least 2")
    if not 0 < lo < hi < 1:
        raise UsageError("grid quantiles need 0 < lo < hi < 1")
    return lo, hi, n


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="steincov", description="Stein operators, kernels and variance bounds.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--family", help="family id, e.g. normal, binomial")
    ap.add_argument("--params", default="", help="comma-separated parameters")
    ap.add_argument("--ell", default=None, help="lattice kind: -1, 0 or +1 (default: +1 discrete, 0 continuous)")
    ap.add_argument("--grid", default="1e-6,1-1e-6,512", help="lo-quantile,hi-quantile,n")
    ap.add_argument("--xprime", default="0", help="comma-separated x' values (curves)")
    ap.add_argument("--g", default="square", help=f"test function for bounds; one of {function_names()}")
    ap.add_argument("--h", default="neg_identity", help="decreasing weight function for bounds")
    ap.add_argument("--output", default="-", help="output path, '-' for stdout")
    ap.add_argument("--format", choices=("csv", "json", "text"), default=None)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--strict", action="store_true", help="treat any numeric failure as fatal")
    ap.add_argument("--scope", default="all", help="'all' or comma-separated family ids (verify)")
    return ap


def _context(args):
    if not args.family:
        raise UsageError(f"{args.command} needs --family")
    try:
        d = make_family(args.family, parse_list(args.params))
    except InvalidParameter as exc:
        raise UsageError(str(exc)) from None
    try:
        ell = None if args.ell is None else LatticeKind.parse(int(parse_number(args.ell)))
        return S.SteinContext(d, ell)
    except (InvalidParameter, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _named(name):
    try:
        return named_function(name)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None


# ---------------------------------------------------------------- output

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v == 0:
            return "0.0"  # no negative zero
        return repr(v)
    return str(v)


def _clean(v):
    """JSON-safe value: non-finite floats become strings."""
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def render(rows: list, columns: list, fmt: str, meta: dict | None = None) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
        return buf.getvalue()
    if fmt == "json":
        body = dict(meta or {})
        body["rows"] = [{c: r.get(c) for c in columns} for r in rows]
        return json.dumps(_clean(body), indent=1, sort_keys=True) + "\n"
    widths = [max(len(c), *(len(_fmt(r.get(c))) for r in rows)) if rows else len(c) for c in columns]
    lines = ["  ".join(c.rjust(wd) for c, wd in zip(columns, widths))]
    for r in rows:
        lines.append("  ".join(_fmt(r.get(c)).rjust(wd) for c, wd in zip(columns, widths)))
    return "\n".join(lines) + "\n"


def write_atomic(text: str, path: str) -> None:
    """Write via a temp file in the target directory and rename over the target."""
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    target = os.path.abspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(target), prefix=".steincov-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------- commands

def _x_grid(ctx, grid):
    lo, hi, n = grid
    try:
        xs = quantile_grid(ctx.dist, lo, hi, n)
    except InvalidParameter as exc:
        raise UsageError(str(exc)) from None
    return xs[ctx.interior(xs)]


def cmd_kernel(args, grid):
    ctx = _context(args)
    xs = _x_grid(ctx, grid)
    tau = np.asarray(S.inverse_apply(ctx, named_function("identity"), xs)) * -1.0
    closed = closed_form_kernel(ctx.dist, ctx.ell)
    ref = np.asarray(closed(xs)) if closed is not None else None
    rows = []
    for i, x in enumerate(xs):
        r = {"x": float(x), "tau": float(tau[i]) + 0.0}
        if ref is not None:
            r["closed_tau"] = float(ref[i])
            r["abs_diff"] = abs(float(tau[i]) - float(ref[i]))
        rows.append(r)
    thr = 1e-12 if ctx.dist.is_discrete else 1e-8
    worst = max((r.get("abs_diff", 0.0) for r in rows), default=0.0)
    ok = worst <= thr * (1 + max((abs(r["tau"]) for r in rows), default=0.0))
    meta = {"family": ctx.dist.name, "params": list(ctx.dist.params), "ell": int(ctx.ell)}
    return rows, ["x", "tau", "closed_tau", "abs_diff"], meta, ok


def cmd_curves(args, grid):
    ctx = _context(args)
    xps = parse_list(args.xprime)
    if not xps:
        raise UsageError("--xprime needs at least one value")
    xs = _x_grid(ctx, grid)
    # the x' values themselves are grid rows, so K(x', x') / p(x') is always emitted
    extra = np.array([v for v in xps if ctx.interior(v)], dtype=float)
    xs = np.unique(np.concatenate([xs, extra]))
    px = ctx.p(xs)
    diag = np.asarray(S.k_kernel(ctx, xs, xs)) / px
    rows = []
    for xp in xps:
        kp = np.asarray(S.k_kernel(ctx, xs, np.full(xs.shape, xp))) / px
        for i, x in enumerate(xs):
            rows.append({"x": float(x), "xprime": float(xp), "K_over_p": float(kp[i]),
                         "K_diag_over_p": float(diag[i])})
    ok = bool(np.all(np.isfinite([r["K_over_p"] for r in rows])))
    meta = {"family": ctx.dist.name, "params": list(ctx.dist.params), "ell": int(ctx.ell)}
    return rows, ["x", "xprime", "K_over_p", "K_diag_over_p"], meta, ok


def cmd_bounds(args, grid):
    ctx = _context(args)
    g, h = _named(args.g), _named(args.h)
    rep = B.variance_sandwich(ctx, g, h, strict=args.strict)
    row = rep.to_dict()
    row["g"], row["h"] = g.name, h.name
    cols = ["g", "h", "lower", "center", "upper", "weight_provenance", "boundary_status"]
    meta = {"family": ctx.dist.name, "params": list(ctx.dist.params), "ell": int(ctx.ell),
            "report": rep.to_dict()}
    ok = rep.consistent and rep.boundary_status != "fail"
    return [row], cols, meta, ok


def cmd_table(args, grid):
    ctx = _context(args)
    rows, ok = [], True
    for name in MOMENT_BATTERY:
        g = named_function(name)
        row = {"g": name}
        try:
            tab = B.table_bounds(ctx, g)
            rep = B.variance_sandwich(ctx, g, check_boundary=False)
        except SteinError as exc:
            if args.strict:
                raise
            row["note"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
            continue
        row.update({"generic_lower": rep.lower, "variance": rep.center, "generic_upper": rep.upper})
        if tab is not None:
            row.update({"table_lower": tab["lower"], "table_upper": tab["upper"]})
            dev = max(abs(tab["lower"] - rep.lower), abs(tab["upper"] - rep.upper)) / (1 + rep.center)
            row["max_rel_diff"] = dev
            ok &= dev <= 1e-8
        else:
            row["note"] = "no tabulated row"
        ok &= rep.consistent
        rows.append(row)
    cols = ["g", "table_lower", "generic_lower", "variance", "generic_upper", "table_upper", "max_rel_diff", "note"]
    meta = {"family": ctx.dist.name, "params": list(ctx.dist.params), "ell": int(ctx.ell)}
    return rows, cols, meta, ok


def cmd_eigen(args, grid):
    from .verify import oracle_spectrum_finite
    ctx = _context(args)
    try:
        ea = B.eigen_weight_analysis(ctx)
    except SteinError as exc:
        raise UsageError(str(exc)) from None
    try:
        exact = oracle_spectrum_finite(ctx.dist, ctx.ell)
    except NotExact:
        exact = None
    rows = ea.table()
    ok = True
    for r in rows:
        if exact is not None:
            r["exact_eigenvalue"] = float(exact[r["mode"]])
            ok &= abs(r["eigenvalue"] - r["exact_eigenvalue"]) <= 1e-10
        ok &= r.get("weight_deviation", 0.0) <= 1e-8
    meta = {"family": ctx.dist.name, "params": list(ctx.dist.params), "ell": int(ctx.ell)}
    return rows, ["mode", "eigenvalue", "exact_eigenvalue", "weight", "weight_deviation"], meta, ok


def cmd_verify(args, grid):
    from .verify import invariant_suite
    scope = "all" if args.scope.strip() == "all" else [s.strip() for s in args.scope.split(",") if s.strip()]
    try:
        rep = invariant_suite(scope, seed=args.seed)
    except InvalidParameter as exc:
        raise UsageError(str(exc)) from None
    body = rep.to_dict()
    rows = body["cases"]
    meta = {k: v for k, v in body.items() if k != "cases"}
    return rows, ["case", "verdict", "residual", "threshold", "note"], meta, rep.passed


HANDLERS = {"kernel": cmd_kernel, "curves": cmd_curves, "bounds": cmd_bounds, "table": cmd_table,
            "eigen": cmd_eigen, "verify": cmd_verify}
DEFAULT_FORMAT = {"kernel": "csv", "curves": "csv", "bounds": "json", "table": "csv", "eigen": "csv",
                  "verify": "json"}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    fmt = args.format or DEFAULT_FORMAT[args.command]
    try:
        grid = parse_grid(args.grid)
        rows, cols, meta, ok = HANDLERS[args.command](args, grid)
    except UsageError as exc:
        print(f"steincov: error: {exc}", file=sys.stderr)
        return 2
    except SteinError as exc:
        print(f"steincov: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.command == "bounds" and fmt == "json":
        text = json.dumps(_clean(meta["report"] | {"g": rows[0]["g"], "h": rows[0]["h"]}),
                          indent=1, sort_keys=True) + "\n"
    else:
        text = render(rows, cols, fmt, meta)
    try:
        write_atomic(text, args.output)
    except OSError as exc:
        print(f"steincov: cannot write {args.output}: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
