"""Command-line entry point ``convex-order``.

Exit codes: 0 when the order or inequality holds, 1 when it does not, 2 on
usage or runtime errors. Human-readable summaries go to standard output and
machine-readable JSON to the files named on the command line.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .certificates import validate_certificate
from .errors import ConvexOrderError, NotOrderedOnLine, Stalled
from .geometry import cx_set, cx_set_subset, find_witness
from .measures import DiscreteMeasure
from .order import (Relation, build_coupling, build_kernel_iterative, check_order, exact_coupling,
                    exact_separator, kernel_from_coupling)
from .sim import compare, deviation_bound, load_scenario, simulate_terminal, F_STREAM, G_STREAM

OK, NOT_OK, ERROR = 0, 1, 2


class UsageError(Exception):
    pass


def _write_json(path, data):
    if path:
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2)


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _load_pair(args, exact=False):
    mu = DiscreteMeasure.load(args.mu, exact=exact)
    nu = DiscreteMeasure.load(args.nu, exact=exact)
    if mu.dimension != nu.dimension:
        raise UsageError(f"mu has dimension {mu.dimension}, nu has {nu.dimension}")
    return mu, nu


def parse_point(text, dimension=None):
    try:
        p = np.array([float(c) for c in str(text).replace(" ", "").split(",") if c != ""])
    except ValueError:
        raise UsageError(f"cannot parse point {text!r}") from None
    if p.size == 0 or (dimension is not None and p.size != dimension):
        raise UsageError(f"point {text!r} must have {dimension} coordinates")
    return p


def parse_grid(text):
    try:
        g = np.array([float(c) for c in str(text).split(",") if c.strip() != ""])
    except ValueError:
        raise UsageError(f"cannot parse grid {text!r}") from None
    if g.size == 0 or not np.all(np.isfinite(g)):
        raise UsageError(f"grid {text!r} must be a nonempty list of numbers")
    return g


def _fraction_str(v):
    return f"{v.numerator}/{v.denominator}" if v.denominator != 1 else str(v.numerator)


# -- order -----------------------------------------------------------------------------

def cmd_order_check(args):
    mu, nu = _load_pair(args, exact=args.exact)
    verdict = check_order(mu, nu, args.relation)
    cert = verdict.certificate().to_dict()
    cert["ordered"] = verdict.ordered
    if args.exact:
        if verdict.ordered:
            pi = exact_coupling(verdict.coupling, mu, nu)
            if pi is None:
                raise ConvexOrderError("coupling does not re-validate in exact arithmetic; "
                                       "give masses as rationals so totals match exactly")
            cert["exact_pi"] = [[_fraction_str(v) for v in row] for row in pi]
        else:
            rat = exact_separator(verdict.separator, mu, nu)
            if rat is None:
                raise ConvexOrderError("separator does not re-validate in exact arithmetic")
            vals, grads, gap = rat
            cert["exact_values"] = [_fraction_str(v) for v in vals]
            cert["exact_subgradients"] = [[_fraction_str(v) for v in g] for g in grads]
            cert["exact_gap"] = _fraction_str(gap)
    _write_json(args.certificate, cert)
    word = "ordered" if verdict.ordered else "NOT ordered"
    kind = "coupling" if verdict.ordered else f"separator (gap {verdict.separator.gap:.6g})"
    suffix = " [exact re-validation passed]" if args.exact else ""
    print(f"mu {word} under {verdict.relation.value}; certificate: {kind}{suffix}")
    return OK if verdict.ordered else NOT_OK


# -- geometry ----------------------------------------------------------------------------

def cmd_geometry_cx_set(args):
    mu, nu = _load_pair(args)
    x = parse_point(args.point, mu.dimension)
    E = [x]
    if args.subset:
        sub = _load_json(args.subset)
        pts = sub.get("points") if isinstance(sub, dict) and "points" in sub else None
        if pts is None:
            pts = DiscreteMeasure.from_dict(sub).points
        E = list(np.asarray(pts, dtype=float).reshape(-1, mu.dimension)) + [x]
    try:
        P = cx_set_subset(mu, nu, E, args.directions) if len(E) > 1 else cx_set(mu, nu, x, args.directions)
    except NotOrderedOnLine as exc:
        print(f"C_x undefined: {exc}")
        return NOT_OK
    out = P.to_dict()
    out["points"] = [[float(c) for c in p] for p in E]
    _write_json(args.out, out)
    label = "exact" if P.exact else "outer approximation"
    nv = 0 if P.vertices is None else len(P.vertices)
    print(f"C_x at {x.tolist()}: {len(P.offsets)} half-spaces, {nv} vertices ({label})")
    if P.vertices is not None:
        for v in P.vertices:
            print("  " + ", ".join(f"{c:.6g}" for c in v))
    return OK


def cmd_geometry_witness(args):
    mu, nu = _load_pair(args)
    x = parse_point(args.point, mu.dimension)
    try:
        w = find_witness(mu, nu, x, args.directions)
    except NotOrderedOnLine as exc:
        print(f"no witness: {exc}")
        return NOT_OK
    _write_json(args.out, w.to_dict())
    print(f"witness for {x.tolist()}: {w.k} points")
    for y, a in zip(w.points, w.weights):
        print(f"  {a:.6g} @ ({', '.join(f'{c:.6g}' for c in y)})")
    return OK


# -- kernels -----------------------------------------------------------------------------

def cmd_kernel_build(args):
    mu, nu = _load_pair(args)
    if args.method == "lp":
        cpl = build_coupling(mu, nu, Relation.CX)
        if cpl is None:
            print("mu is NOT cx-ordered below nu; no kernel exists")
            return NOT_OK
        kern = kernel_from_coupling(cpl, mu)
    else:
        if build_coupling(mu, nu, Relation.CX) is None:
            print("mu is NOT cx-ordered below nu; no kernel exists")
            return NOT_OK
        try:
            kern = build_kernel_iterative(mu, nu, args.max_rounds, args.eps_floor,
                                          allow_fallback=not args.no_fallback)
        except Stalled as exc:
            print(f"iterative construction stalled: {exc}")
            return ERROR
    _write_json(args.out, kern.to_dict(mu))
    res = kern.to_dict()["barycenter_residuals"]
    print(f"kernel {kern.matrix.shape[0]}x{kern.matrix.shape[1]} via {kern.method}"
          f" ({kern.rounds} rounds), max barycenter residual {max(res, default=0.0):.3g}")
    if kern.note:
        print(f"  fallback reason: {kern.note}")
    return OK


# -- sim -------------------------------------------------------------------------------

def cmd_sim_compare(args):
    sc = load_scenario(args.scenario)
    rel = args.relation or sc.relation
    report = compare(sc.F, sc.G, rel, args.paths, args.seed, force=args.force)
    data = report.to_dict()
    _write_json(args.out, data)
    print(report.table())
    print(json.dumps({"violations": data["violations"], "n_paths": report.n_paths,
                      "seed": report.seed, "relation": report.relation,
                      "hypotheses_ok": report.hypotheses.ok, "forced": report.forced}))
    return NOT_OK if report.violations else OK


def cmd_sim_deviation(args):
    sc = load_scenario(args.scenario)
    xs = parse_grid(args.x_grid)
    lams = parse_grid(args.lambda_grid) if args.lambda_grid else None
    if lams is not None and np.any(lams <= 0):
        raise UsageError("lambda grid must be positive")
    G = simulate_terminal(sc.G, args.paths, args.seed, G_STREAM)
    F = simulate_terminal(sc.F, args.paths, args.seed, F_STREAM)
    rows = deviation_bound(G, xs, lams, F)
    data = {"seed": args.seed, "n_paths": args.paths,
            "rows": [dict(vars(r), ok=r.ok) for r in rows]}
    _write_json(args.out, data)
    print(f"{'x':>8}{'bound':>12}{'lambda':>9}{'P(|F|>=x)':>12}{'se':>10}  ok")
    for r in rows:
        print(f"{r.x:>8.4g}{r.bound:>12.5g}{r.lam:>9.3g}{r.tail_F:>12.5g}{r.se_tail:>10.3g}  {r.ok}")
    print(json.dumps({"violations": sum(not r.ok for r in rows)}))
    return OK if all(r.ok for r in rows) else NOT_OK


# -- validation --------------------------------------------------------------------------

def cmd_validate(args):
    mu, nu = _load_pair(args)
    data = _load_json(args.certificate)
    points = None
    if args.point:
        points = [parse_point(args.point, mu.dimension)]
    elif "points" in data and "halfspaces" in data:
        points = data["points"]
    kind, problems = validate_certificate(data, mu, nu, args.relation, points)
    if problems:
        print(f"{kind} certificate INVALID:")
        for p in problems:
            print(f"  - {p}")
        return NOT_OK
    print(f"{kind} certificate valid")
    return OK


# -- parser ------------------------------------------------------------------------------

def _add_pair(p):
    p.add_argument("--mu", required=True, help="measure JSON for mu")
    p.add_argument("--nu", required=True, help="measure JSON for nu")


def build_parser():
    parser = argparse.ArgumentParser(prog="convex-order",
                                     description="Convex order checks, C_x geometry, kernels and Monte Carlo comparisons.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    top = parser.add_subparsers(dest="group", required=True)

    order = top.add_parser("order", help="decide mu <= nu").add_subparsers(dest="cmd", required=True)
    p = order.add_parser("check", help="check mu <= nu and write a certificate")
    p.add_argument("--relation", required=True, choices=[r.value for r in Relation])
    _add_pair(p)
    p.add_argument("--certificate", help="write the certificate JSON here")
    p.add_argument("--exact", action="store_true",
                   help="accept rational input and re-validate the certificate in exact arithmetic")
    p.set_defaults(func=cmd_order_check)

    geo = top.add_parser("geometry", help="C_x sets and witnesses").add_subparsers(dest="cmd", required=True)
    p = geo.add_parser("cx-set", help="compute C_x (or C_E with --subset)")
    _add_pair(p)
    p.add_argument("--point", required=True, help='comma-separated coordinates, e.g. "-1,0"')
    p.add_argument("--subset", help="JSON with extra points of Supp(mu) (measure or {\"points\": ...})")
    p.add_argument("--directions", type=int, help="number of sphere directions in d >= 3")
    p.add_argument("--out", help="write the polytope JSON here")
    p.set_defaults(func=cmd_geometry_cx_set)
    p = geo.add_parser("witness", help="Caratheodory witness simplex inside C_x")
    _add_pair(p)
    p.add_argument("--point", required=True)
    p.add_argument("--directions", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_geometry_witness)

    ker = top.add_parser("kernel", help="martingale kernels").add_subparsers(dest="cmd", required=True)
    p = ker.add_parser("build", help="kernel K with mu K = nu")
    _add_pair(p)
    p.add_argument("--method", choices=["lp", "iterative"], default="iterative")
    p.add_argument("--max-rounds", type=int, default=200)
    p.add_argument("--eps-floor", type=float, default=2.0 ** -20)
    p.add_argument("--no-fallback", action="store_true", help="fail instead of falling back to the LP")
    p.add_argument("--out")
    p.set_defaults(func=cmd_kernel_build)

    sim = top.add_parser("sim", help="Monte Carlo comparisons").add_subparsers(dest="cmd", required=True)
    p = sim.add_parser("compare", help="E[phi(F)] vs E[phi(G)] over the convex battery")
    p.add_argument("--scenario", required=True)
    p.add_argument("--paths", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--relation", choices=[r.value for r in Relation], help="override the scenario relation")
    p.add_argument("--force", action="store_true", help="compare even when the hypotheses fail")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sim_compare)
    p = sim.add_parser("deviation", help="Laplace tail bound from G against the empirical tail of F")
    p.add_argument("--scenario", required=True)
    p.add_argument("--x-grid", required=True, help='comma-separated levels, e.g. "1,2,3"')
    p.add_argument("--lambda-grid", help="comma-separated positive rates")
    p.add_argument("--paths", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sim_deviation)

    p = top.add_parser("validate", help="re-check a certificate file by direct arithmetic")
    p.add_argument("certificate")
    _add_pair(p)
    p.add_argument("--relation", choices=[r.value for r in Relation])
    p.add_argument("--point", help="defining point for polytope certificates")
    p.set_defaults(func=cmd_validate)
    return parser


_VALUE_OPTIONS = ("--point", "--x-grid", "--lambda-grid")


def _attach_negative_values(argv):
    """Join ``--point -1,0`` into ``--point=-1,0`` so argparse keeps the value."""
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in _VALUE_OPTIONS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def main(argv=None):
    parser = build_parser()
    argv = _attach_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else ERROR
    if getattr(args, "paths", None) is not None and args.paths <= 0:
        print("error: --paths must be positive", file=sys.stderr)
        return ERROR
    try:
        return args.func(args)
    except (ConvexOrderError, UsageError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
