"""Command-line front end: ``so3tp {coeffs, verify, tp, fit-norm, bench}``.

Exit codes: 0 success, 1 verification failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_VERIFY, EXIT_USAGE = 0, 1, 2
TARGETS = {"vtilde": "inv_vtilde", "gtilde": "inv_gtilde", "gamma": "gamma", "lambda_im": "inv_lambda_im"}


class UsageError(Exception):
    pass


def _nonneg(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {s}")
    return v


def _positive(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _quadrature(s: str) -> str:
    if s != "gauss" and not s.startswith("design:"):
        raise argparse.ArgumentTypeError("expected gauss or design:<path>")
    return s


def _emit(text: str, output) -> None:
    if output in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(output).write_text(text)


def _vector(s: str) -> np.ndarray:
    if s.startswith("@"):
        s = Path(s[1:]).read_text()
    try:
        v = np.asarray(json.loads(s), dtype=float)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"cannot parse feature vector: {exc}") from None
    if v.ndim != 1:
        raise UsageError("feature vector must be a flat JSON list")
    return v


# --------------------------------------------------------------------------

def cmd_coeffs(args) -> int:
    from .coupling import build_table, dumps_table, table_records
    table = build_table(args.lmax, args.quadrature, source=args.source)
    if args.format == "csv":
        recs = table_records(table)
        cols = ["l1", "l2", "l3", "parity", "G_tilde", "V_tilde", "Lambda_im", "Gamma"]
        lines = [",".join(cols)] + [",".join(repr(r[c]) for c in cols) for r in recs]
        _emit("\n".join(lines) + "\n", args.output)
    else:
        _emit(dumps_table(table, blocks=args.blocks), args.output)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_all
    flip = tuple(args.flip_vtilde) if args.flip_vtilde else None
    checks = run_all(args.lmax, args.quadrature, flip_vtilde=flip, seed=args.seed)
    passed = all(c.passed for c in checks)
    report = {"lmax": args.lmax, "quadrature": args.quadrature, "passed": passed,
              "checks": [c.as_dict() for c in checks]}
    _emit(json.dumps(report, indent=1), args.output)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: worst {c.worst:.3e} (tol {c.tolerance:g})",
              file=sys.stderr)
    return EXIT_OK if passed else EXIT_VERIFY


def cmd_tp(args) -> int:
    from .quadrature import SAFETY_MARGIN, grid_from_spec
    from .tensorprod import IrrepFeature, cgtp, combined_tp, gtp, vstp
    h1 = IrrepFeature(args.l1, _vector(args.h1))
    h2 = IrrepFeature(args.l2, _vector(args.h2))
    fn = {"cgtp": cgtp, "gtp": gtp, "vstp": vstp, "combined": combined_tp}[args.method]
    if args.method == "cgtp":
        out = fn(h1, h2, args.l3)
    else:
        grid = grid_from_spec(args.quadrature, args.l1 + args.l2 + args.l3 + SAFETY_MARGIN)
        out = fn(h1, h2, args.l3, grid)
    _emit(json.dumps({"method": args.method, "l3": args.l3, "coeffs": out.coeffs.tolist()}), args.output)
    return EXIT_OK


def cmd_fit_norm(args) -> int:
    import warnings
    from .coupling import build_table
    from .lowrank import build_target, fit_cp
    warnings.simplefilter("ignore", RuntimeWarning)
    kind = TARGETS[args.target]
    table = build_table(args.lmax, source="closed_form")
    factors, rep = fit_cp(build_target(kind, table), args.rank, args.restarts, args.seed,
                         workers=args.threads)
    doc = {"target": kind, "lmax": args.lmax, "rank": args.rank, "restarts": args.restarts,
           "seed": args.seed, "sigma_log": rep.sigma_log, "frac_within_2x": rep.frac_within_2x,
           "r_squared": rep.r_squared, "loss": rep.loss, "n_entries": rep.n_entries,
           "n_sign_errors": rep.n_sign_errors,
           "factors": {"a": factors.a.tolist(), "b": factors.b.tolist(), "c": factors.c.tolist()}}
    _emit(json.dumps(doc, indent=1), args.output)
    if args.sweep_csv:
        with open(args.sweep_csv, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["target", "Lmax", "rank", "sigma_log", "frac_within_2x", "r_squared"])
            for L in range(1, args.lmax + 1):
                tgt = build_target(kind, build_table(L, source="closed_form"))
                for R in args.sweep_ranks:
                    _, r = fit_cp(tgt, R, args.restarts, args.seed, workers=args.threads)
                    wr.writerow([kind, L, R, r.sigma_log, r.frac_within_2x, r.r_squared])
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import bench_scaling, fit_slopes, records_to_csv
    recs = bench_scaling(sorted(args.L), args.R, args.repeats, tuple(args.methods), args.seed)
    slopes = fit_slopes(recs)
    if args.format == "json":
        text = json.dumps({"records": [r.__dict__ for r in recs], "slopes": slopes}, indent=1)
    else:
        text = records_to_csv(recs)
    _emit(text, args.output)
    for m, s in slopes.items():
        print(f"slope {m}: {s:.2f}", file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    from .bench import METHODS
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-o", "--output", help="output path (default stdout)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=_positive, default=1, help="numba worker threads")

    ap = argparse.ArgumentParser(prog="so3tp", description="Exact and integral-based SO(3) tensor products.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coeffs", parents=[common], help="tabulate coupling scalars")
    p.add_argument("--lmax", type=_nonneg, required=True)
    p.add_argument("--quadrature", type=_quadrature, default="gauss")
    p.add_argument("--source", choices=["quadrature", "closed_form"], default="quadrature")
    p.add_argument("--blocks", action="store_true", help="include real CG blocks")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(func=cmd_coeffs)

    p = sub.add_parser("verify", parents=[common], help="run the self-check suite")
    p.add_argument("--lmax", type=_nonneg, default=6)
    p.add_argument("--quadrature", type=_quadrature, default="gauss")
    p.add_argument("--flip-vtilde", type=_nonneg, nargs=3, metavar="L", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("tp", parents=[common], help="evaluate one tensor product")
    p.add_argument("--method", choices=["cgtp", "gtp", "vstp", "combined"], required=True)
    p.add_argument("--l1", type=_nonneg, required=True)
    p.add_argument("--l2", type=_nonneg, required=True)
    p.add_argument("--l3", type=_nonneg, required=True)
    p.add_argument("--h1", required=True, help="JSON list or @file")
    p.add_argument("--h2", required=True, help="JSON list or @file")
    p.add_argument("--quadrature", type=_quadrature, default="gauss")
    p.set_defaults(func=cmd_tp)

    p = sub.add_parser("fit-norm", parents=[common], help="low-rank fit of an inverse coupling tensor")
    p.add_argument("--target", choices=sorted(TARGETS), default="vtilde")
    p.add_argument("--lmax", type=_nonneg, required=True)
    p.add_argument("--rank", type=_positive, default=2)
    p.add_argument("--restarts", type=_positive, default=5)
    p.add_argument("--sweep-csv", help="also write (Lmax, rank, sigma_log) for Lmax = 1..lmax")
    p.add_argument("--sweep-ranks", type=_positive, nargs="+", default=[1, 2])
    p.set_defaults(func=cmd_fit_norm)

    p = sub.add_parser("bench", parents=[common], help="runtime scaling of the layers")
    p.add_argument("--L", type=_positive, nargs="+", default=[4, 8, 16, 32])
    p.add_argument("--R", type=_positive, default=1)
    p.add_argument("--repeats", type=_positive, default=5)
    p.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS))
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.threads > 1:
            import numba
            numba.config.THREADING_LAYER = "workqueue"
            numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
        return args.func(args)
    except (UsageError, FileNotFoundError, ValueError) as exc:
        print(f"so3tp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
