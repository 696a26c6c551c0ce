"""Command-line entry point.

Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 published-value mismatch.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

from .chain import build_chain, monicize_chain, shared_u_chain
from .derive import derive_constants
from .errors import ComparisonMismatch, FastRootError, PreconditionError, SolverError
from .minimax import linear_closed_form, optimize_monic_c, remez_general, remez_monic
from .pseudolog import RationalPower
from .scheme.core import (
    SHIFT_THEN_SUBTRACT, SUBTRACT_THEN_SHIFT, ApproxScheme, make_scheme, scheme_from_chain,
)
from .scheme.emit import FORMATS, emit_source
from .tune import Neighborhood, tune_scheme
from .verify import ScanMode, catalog_scheme, compare_published, load_catalog, scan

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_MISMATCH = 0, 2, 3, 4

PARETO_HELP = """Operation counts assume Horner evaluation without FMA: a degree-n
general polynomial costs 2n operations plus the final multiply by y plus forming
z = x^a y^b (a+b-1 multiplies, 2 for the square root); a signed monic saves the
multiply by its leading coefficient.  Degree 0 needs no z."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(json.dumps({"error": "usage", "message": message}), file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _dump(obj):
    print(json.dumps(obj, indent=2))


def _power(args) -> RationalPower:
    return RationalPower(args.a, args.b)


def _degrees(text: str):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _load_scheme(args) -> ApproxScheme:
    if getattr(args, "catalog_entry", None):
        s = catalog_scheme(args.catalog_entry)
        if s is None:
            raise PreconditionError(f"catalog entry {args.catalog_entry!r} has no constants")
        return s
    if not args.scheme:
        raise PreconditionError("give --scheme FILE or --entry ID")
    with open(args.scheme) as fh:
        d = json.load(fh)
    return ApproxScheme.from_dict(d.get("scheme", d))


def cmd_derive(args):
    power = _power(args)
    d = derive_constants(power, args.s)
    out = {"constants": d.to_dict()}
    if args.degree is not None:
        if args.monic:
            c, poly = optimize_monic_c(power, args.degree, args.s)
            out["monic_c"] = c
        elif args.degree == 1:
            poly = linear_closed_form(power.b, d.z_min, d.z_max)
        else:
            poly, _ = remez_general(power.b, args.degree, d.z_min, d.z_max)
        out["polynomial"] = poly.to_dict()
        out["epsilon"] = poly.minimax_error
    _dump(out)


def cmd_minimax(args):
    if args.monic:
        poly, eq = remez_monic(args.b, args.degree, args.zmin, args.zmax, args.sign)
    else:
        poly, eq = remez_general(args.b, args.degree, args.zmin, args.zmax)
    out = poly.to_dict()
    out["equioscillation"] = eq.to_dict() if eq is not None else None
    _dump(out)


def cmd_chain(args):
    chain = build_chain(_power(args), args.s, args.degrees, monic=args.monic)
    if args.monicize:
        chain = monicize_chain(chain)
    elif args.shared_u:
        chain = shared_u_chain(chain)
    _dump(chain.to_dict())


def cmd_build(args):
    power = _power(args)
    form = SUBTRACT_THEN_SHIFT if args.subtract_first else SHIFT_THEN_SUBTRACT
    if len(args.degrees) > 1 or args.monicize or args.shared_u:
        chain = build_chain(power, args.s, args.degrees, monic=args.monic)
        if args.monicize:
            chain = monicize_chain(chain)
        elif args.shared_u:
            chain = shared_u_chain(chain)
        scheme = scheme_from_chain(chain, None, form, args.parity, args.name)
    else:
        n = args.degrees[0]
        if args.monic:
            c, poly = optimize_monic_c(power, n, args.s)
        else:
            d = derive_constants(power, args.s)
            c = d.c
            poly = linear_closed_form(power.b, d.z_min, d.z_max) if n == 1 \
                else remez_general(power.b, n, d.z_min, d.z_max)[0]
        scheme = make_scheme(power, c, [poly] if n or not args.monic else [], [args.variant], form,
                             args.parity, args.name)
    _dump(scheme.to_dict())


def cmd_emit(args):
    scheme = _load_scheme(args)
    if args.name:
        scheme = ApproxScheme.from_dict({**scheme.to_dict(), "name": args.name})
    sys.stdout.write(emit_source(scheme, args.format))


def _mode(args) -> ScanMode:
    if args.lo is not None or args.hi is not None:
        return ScanMode.restricted(args.lo, args.hi)
    if args.stride and args.stride > 1:
        return ScanMode.strided(args.stride)
    return ScanMode()


def cmd_verify(args):
    scheme = _load_scheme(args)
    rep = scan(scheme, mode=_mode(args), threads=args.threads)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(rep.exponent_csv())
    _dump(rep.to_dict())


def cmd_tune(args):
    scheme = _load_scheme(args)
    trace = open(args.trace, "w") if args.trace else None
    try:
        best, rep = tune_scheme(scheme, budget=args.budget, stride=args.stride, threads=args.threads,
                                neighborhood=Neighborhood(args.magic_radius, args.coeff_radius),
                                trace=trace)
    finally:
        if trace:
            trace.close()
    _dump({"scheme": best.to_dict(), "report": rep.to_dict() if rep else None})


def cmd_compare(args):
    ids = [e["id"] for e in load_catalog()["entries"]]
    if args.catalog not in (None, "all"):
        ids = [args.catalog]
    rows = []
    failed = False
    for entry in ids:
        res = compare_published(entry, threads=args.threads)
        failed |= not res.passed
        rows.append(res)
    if args.json:
        _dump([r.to_dict() for r in rows])
    else:
        print(f"{'entry':<11} {'published':>12} {'measured':>14}  result")
        for r in rows:
            meas = "n/a" if r.measured is None else f"{r.measured:.6e}"
            print(f"{r.entry:<11} {r.published:>12} {meas:>14}  {'PASS' if r.passed else 'FAIL'}")
            for label, pub, m, ok in r.checks:
                print(f"  {label:<9} {pub:>12} {m:>14.6e}  {'PASS' if ok else 'FAIL'}")
    if failed:
        raise ComparisonMismatch("measured error disagrees with the published value")


def op_count(power: RationalPower, degree: int, monic: bool) -> int:
    z_cost = power.a + power.b - 1 if degree >= 1 else 0
    ops = z_cost + 2 * degree + 1
    return ops - 1 if monic else ops


def pareto_rows(power: RationalPower, max_degree: int, s: int = -1):
    d = derive_constants(power, s)
    rows = []
    for n in range(max_degree + 1):
        c, poly = optimize_monic_c(power, n, s)
        rows.append(("monic", n, op_count(power, n, True), poly.minimax_error, c))
        general = linear_closed_form(power.b, d.z_min, d.z_max) if n == 1 \
            else remez_general(power.b, n, d.z_min, d.z_max)[0]
        rows.append(("general", n, op_count(power, n, False), general.minimax_error, d.c))
    return rows


def cmd_pareto(args):
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["kind", "degree", "flops", "epsilon", "c"])
    for kind, n, ops, eps, c in pareto_rows(_power(args), args.max_degree, args.s):
        w.writerow([kind, n, ops, f"{eps:.9e}", repr(c)])


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fastroot", description="Derive, build and verify fast x^(-a/b) kernels.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def power_args(sp, s=True):
        sp.add_argument("--a", type=int, required=True, help="numerator of the exponent")
        sp.add_argument("--b", type=int, required=True, help="denominator of the exponent")
        if s:
            sp.add_argument("--s", type=int, default=-1, help="integer part of the offset c (default -1)")

    sp = sub.add_parser("derive", help="analytic constants for x^(-a/b)")
    power_args(sp)
    sp.add_argument("--degree", type=int, help="also fit a refinement polynomial of this degree")
    sp.add_argument("--monic", action="store_true", help="fit a signed monic and optimise c for it")
    sp.set_defaults(func=cmd_derive)

    sp = sub.add_parser("minimax", help="minimax relative-error polynomial for z^(-1/b)")
    sp.add_argument("--b", type=int, required=True)
    sp.add_argument("--degree", type=int, required=True)
    sp.add_argument("--zmin", type=float, required=True)
    sp.add_argument("--zmax", type=float, required=True)
    sp.add_argument("--monic", action="store_true")
    sp.add_argument("--sign", type=int, choices=(-1, 1), default=-1, help="leading coefficient sign")
    sp.set_defaults(func=cmd_minimax)

    def chain_args(sp):
        sp.add_argument("--degrees", type=_degrees, default=[1], help="comma-separated stage degrees")
        sp.add_argument("--monic", action="store_true", help="fit every stage as a signed monic")
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--monicize", action="store_true", help="rescale later stages to monic")
        g.add_argument("--shared-u", action="store_true", help="rescale for a shared u*x^a factor")

    sp = sub.add_parser("chain", help="greedy multi-stage refinement chain")
    power_args(sp)
    chain_args(sp)
    sp.set_defaults(func=cmd_chain)

    sp = sub.add_parser("build", help="analytic binary32 scheme JSON")
    power_args(sp)
    chain_args(sp)
    sp.add_argument("--variant", help="degree-1 ordering tag, e.g. d5:xyyc or f1:w(c0-xyy)")
    sp.add_argument("--subtract-first", action="store_true", help="use (C' - X) >> 1 (b = 2 only)")
    sp.add_argument("--parity", type=int, choices=(0, 1), default=1, help="low bit of C'")
    sp.add_argument("--name", default="approx")
    sp.set_defaults(func=cmd_build)

    def scheme_args(sp):
        sp.add_argument("--scheme", help="scheme JSON file")
        sp.add_argument("--entry", dest="catalog_entry", help="built-in catalog entry instead of a file")

    sp = sub.add_parser("emit", help="emit kernel source")
    scheme_args(sp)
    sp.add_argument("--format", choices=FORMATS, default="c99")
    sp.add_argument("--name", help="function name")
    sp.set_defaults(func=cmd_emit)

    def scan_args(sp):
        sp.add_argument("--threads", type=int, default=None)

    sp = sub.add_parser("verify", help="measure peak relative error")
    scheme_args(sp)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--exhaustive", action="store_true", help="all positive normal inputs (default)")
    g.add_argument("--stride", type=int, help="every Nth bit pattern")
    sp.add_argument("--lo", type=float, help="restrict to x >= LO")
    sp.add_argument("--hi", type=float, help="restrict to x < HI")
    sp.add_argument("--csv", help="write per-exponent peak errors here")
    scan_args(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("tune", help="coordinate-descent tuning of constants")
    scheme_args(sp)
    sp.add_argument("--budget", type=int, default=2000, help="candidate evaluations")
    sp.add_argument("--stride", type=int, default=256)
    sp.add_argument("--magic-radius", type=int, default=1 << 10)
    sp.add_argument("--coeff-radius", type=int, default=1 << 8)
    sp.add_argument("--trace", help="JSON-lines trace output file")
    scan_args(sp)
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("compare", help="published vs measured errors for the catalog")
    sp.add_argument("--catalog", nargs="?", const="all", default="all", metavar="ENTRY")
    sp.add_argument("--json", action="store_true")
    scan_args(sp)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("pareto", help="operation count vs error, monic and general",
                        description=PARETO_HELP)
    power_args(sp)
    sp.add_argument("--max-degree", type=int, default=6)
    sp.set_defaults(func=cmd_pareto)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ComparisonMismatch as exc:
        print(json.dumps({"error": "mismatch", "message": str(exc.args[0])}), file=sys.stderr)
        return EXIT_MISMATCH
    except (PreconditionError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        diag = {"error": "solver", "message": str(exc)}
        if exc.best is not None:
            diag["best_error"] = getattr(exc.best[0], "minimax_error", None)
        print(json.dumps(diag), file=sys.stderr)
        return EXIT_NUMERIC
    except FastRootError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
