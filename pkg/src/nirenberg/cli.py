"""Command-line front end: classify, solve, continue, kw, validate, export-grid.

Exit codes
    0   success (classify: K is interior and Morse)
    1   validate: an oracle check failed
    2   classify: K sits on a boundary band or is not Morse
    3   classify: K has no positive values
    4   solver did not converge (or another numerical failure)
    5   a Kazdan-Warner sign certificate rules out every solution
    64  unreadable input, bad flags or bad run configuration
    65  field lacks the requested symmetry
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import exact
from .continuation import continuation, gnuplot_script, load_run_config
from .curvature import gauss_curvature
from .errors import (
    ClassificationFailed,
    FieldFormatError,
    NirenbergError,
    NotInCPlus,
    NotInvariant,
)
from .fileio import load_field, save_field, write_grid_csv, write_json
from .morse import classify_regions
from .obstruction import kw_vector, sign_certificate
from .solver import SolveOptions, flow_solve, multistart_enumerate, newton_solve, parse_symmetry, signed_count
from .sphere import SpectralField, make_grid, synthesize, values_on

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_BOUNDARY = 2
EXIT_OUTSIDE = 3
EXIT_NO_CONVERGENCE = 4
EXIT_OBSTRUCTED = 5
EXIT_USAGE = 64
EXIT_NOT_INVARIANT = 65

DEFAULT_LMAX = 24


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags, which would collide with "boundary"
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _default_lmax() -> int:
    raw = os.environ.get("NIRENBERG_LMAX")
    if raw is None:
        return DEFAULT_LMAX
    try:
        v = int(raw)
    except ValueError:
        raise UsageError(f"NIRENBERG_LMAX={raw!r} is not an integer") from None
    if v < 1:
        raise UsageError("NIRENBERG_LMAX must be positive")
    return v


def _load_K(args) -> tuple[SpectralField, dict]:
    """K from a field file or a named preset; the dict carries any known solution."""
    if args.preset:
        try:
            fields = exact.preset(args.preset, args.lmax)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
        return fields["K"], fields
    if not args.field:
        raise UsageError("give a field file or --preset NAME")
    return load_field(args.field), {}


def _out_dir(args) -> Path:
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _say(args, text: str) -> None:
    if not args.quiet:
        print(text)


# ---------------------------------------------------------------------------
# commands


def cmd_classify(args) -> int:
    K, _ = _load_K(args)
    report = classify_regions(K)
    d = report.to_dict()
    path = Path(args.output) if args.output else _out_dir(args) / "classify.json"
    write_json(path, d)
    _say(args, f"status {report.status}; degree {report.degree}; report {path}")
    if report.status == "outside":
        return EXIT_OUTSIDE
    if report.status == "interior" and report.degree_defined:
        return EXIT_OK
    return EXIT_BOUNDARY


def _start_field(args, known: dict, L: int) -> SpectralField:
    s = args.start
    if s == "zero":
        return SpectralField.zeros(L)
    if s == "known":
        if "u" not in known:
            raise UsageError("--start known needs a preset with a closed-form solution")
        return known["u"].with_lmax(L)
    return load_field(s).with_lmax(L)


def cmd_solve(args) -> int:
    try:
        grp = parse_symmetry(args.symmetry)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    K, known = _load_K(args)
    if grp is not None and grp.defect(K) > 1e-10:
        raise NotInvariant(f"K is not invariant under {grp.tag} (defect {grp.defect(K):.2e})")
    opts = SolveOptions(lmax=args.lmax, tol=args.tol, symmetry=args.symmetry)
    cert = sign_certificate(K)
    out = _out_dir(args)
    if cert.obstructed:
        write_json(out / "solve.json", {"certificate": cert.to_dict(), "solutions": []})
        _say(args, f"obstructed: <grad l, grad K> >= 0 with l = {np.round(cert.direction, 6).tolist()}")
        return EXIT_OBSTRUCTED
    g = make_grid(args.lmax, 2)
    if args.multistart:
        results = multistart_enumerate(K, opts, n_starts=args.multistart, seed=args.seed, jobs=args.jobs)
    else:
        u0 = _start_field(args, known, args.lmax)
        solve = flow_solve if args.method == "flow" else newton_solve
        results = [solve(K, u0, opts)]
    summaries = []
    for i, res in enumerate(results):
        s = res.summary()
        if res.converged:
            name = "u.json" if not args.multistart else f"u_{i:03d}.json"
            save_field(out / name, res.u)
            write_grid_csv(out / name.replace(".json", "_grid.csv"), synthesize(res.u, g))
            s["field_file"] = name
        summaries.append(s)
    report = {"certificate": cert.to_dict(), "solutions": summaries}
    if args.multistart:
        report["signed_count"] = signed_count(results)
        # enumeration is only backed by compactness when K is interior
        region = classify_regions(K)
        report["region"] = region.status
        report["advisory"] = not (region.status == "interior" and region.degree_defined)
    write_json(out / "solve.json", report)
    ok = [r for r in results if r.converged]
    _say(args, f"{len(ok)} converged solution(s); summary {out / 'solve.json'}")
    return EXIT_OK if ok else EXIT_NO_CONVERGENCE


def cmd_continue(args) -> int:
    if args.preset:
        try:
            path, opts, start = exact.PATH_PRESETS[args.preset]()
        except KeyError:
            raise UsageError(f"unknown path preset {args.preset!r}; choose from {', '.join(sorted(exact.PATH_PRESETS))}") from None
    elif args.config:
        path, opts, start = load_run_config(args.config)
    else:
        raise UsageError("give a run configuration file or --preset NAME")
    if args.max_steps is not None:
        opts = replace(opts, max_steps=args.max_steps)
    branch = continuation(path, start, opts)
    out = _out_dir(args)
    (out / "branch.csv").write_text(branch.to_csv())
    (out / "branch.gp").write_text(gnuplot_script("branch.csv"))
    snaps = {}
    for i, p in enumerate(branch.folds):
        name = f"fold_{i:03d}.json"
        save_field(out / name, p.u)
        snaps[name] = p.t
    save_field(out / "final.json", branch.points[-1].u)
    snaps["final.json"] = branch.points[-1].t
    summary = branch.summary()
    summary["snapshots"] = snaps
    write_json(out / "branch.json", summary)
    _say(args, f"{branch.status}: {len(branch.points)} points, {len(branch.folds)} fold(s); {out / 'branch.csv'}")
    return EXIT_OK


def cmd_kw(args) -> int:
    K, _ = _load_K(args)
    u = load_field(args.u) if args.u else SpectralField.zeros(max(K.lmax, 2))
    L = max(K.lmax, u.lmax, 2)
    g = make_grid(L, 2)
    u = u.with_lmax(L)
    v = kw_vector(K, u, g)
    cert = sign_certificate(K)
    report = {"kw": [float(x) for x in v], "kw_norm": float(np.linalg.norm(v)), "certificate": cert.to_dict()}
    path = Path(args.output) if args.output else _out_dir(args) / "kw.json"
    write_json(path, report)
    _say(args, f"kw norm {report['kw_norm']:.3e}; certificate {cert.verdict}")
    return EXIT_OK


def _validation_checks(lmax: int):
    """Closed-form checks, each yielding (name, passed, detail)."""
    pair = exact.quadrupole_pair(lmax)
    g = make_grid(lmax, 2)
    K_num = values_on(gauss_curvature(pair.u, g), g)
    err = float(np.max(np.abs(K_num - pair.K_exact(values_on(pair.u, g)))))
    yield "eigenfunction forward map", err < 1e-10, f"max error {err:.2e}"
    report = classify_regions(pair.K)
    ok = len(report.points) == 6 and report.boundary_N
    yield "eigenfunction critical points", ok, f"{len(report.points)} points, boundary_N={report.boundary_N}"
    peak = float(np.max(K_num))
    expect = 2.5 * math.exp(-0.5)
    yield "eigenfunction maximum value", abs(peak - expect) < 1e-6, f"{peak:.12f} vs {expect:.12f}"
    b = exact.bubble_pair((0.0, 0.0, 1.0), 2.0, max(lmax, 24))
    yield "bubble curvature", b.curvature_error < 1e-8, f"error {b.curvature_error:.2e}"
    yield "bubble area", abs(b.area - 4 * math.pi) < 1e-8, f"area - 4 pi = {b.area - 4 * math.pi:.2e}"
    for signs, want in ((("+", "+"), 1), (("-", "-"), -1), (("+", "-"), 0)):
        try:
            d = exact.perturbed_saddle_family(signs).degree
        except ClassificationFailed as exc:
            yield f"saddle family {''.join(signs)}", False, str(exc)
            continue
        yield f"saddle family {''.join(signs)}", d == want, f"degree {d}, expected {want}"


def cmd_validate(args) -> int:
    rows = []
    for name, ok, detail in _validation_checks(args.lmax):
        rows.append({"check": name, "passed": bool(ok), "detail": detail})
        _say(args, f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    if args.output:
        write_json(args.output, {"checks": rows})
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_CHECK_FAILED


def cmd_export_grid(args) -> int:
    f, known = _load_K(args)
    if args.curvature and args.preset:
        # a preset names a curvature; its known solution is the factor to use
        if "u" not in known:
            raise UsageError(f"preset {args.preset!r} has no closed-form solution to take the curvature of")
        f = known["u"]
    L = max(args.lmax, f.lmax)
    g = make_grid(L, 2)
    if args.curvature:
        f = gauss_curvature(f.with_lmax(L), g)
    path = Path(args.output) if args.output else _out_dir(args) / "grid.csv"
    write_grid_csv(path, synthesize(f.with_lmax(L), g))
    _say(args, f"grid {g.nlat}x{g.nlon} written to {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--lmax", type=int, default=None, help="band limit (default $NIRENBERG_LMAX or 24)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-q", "--quiet", action="store_true")

    field_args = _Parser(add_help=False)
    field_args.add_argument("field", nargs="?", help="field file (JSON coefficients)")
    field_args.add_argument("--preset", help="named field instead of a file")

    p = _Parser(prog="nirenberg", description="Prescribed Gauss curvature on the round sphere.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("classify", parents=[common, field_args], help="critical points, region and degree of K")
    c.add_argument("--output", help="report path (default OUT/classify.json)")
    c.set_defaults(run=cmd_classify)

    s = sub.add_parser("solve", parents=[common, field_args], help="solve for u with curvature K")
    s.add_argument("--start", default="zero", help="'zero', 'known' (preset solution) or a field file")
    s.add_argument("--method", choices=("newton", "flow"), default="newton")
    s.add_argument("--symmetry", default="none", help="none, even, axisymmetric, axisymmetric-even, half-turns:x,y")
    s.add_argument("--multistart", type=int, default=0, metavar="N", help="enumerate from N random starts")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--tol", type=float, default=1e-10)
    s.set_defaults(run=cmd_solve)

    k = sub.add_parser("continue", parents=[common], help="pseudo-arclength continuation along a path of K")
    k.add_argument("config", nargs="?", help="run configuration (JSON)")
    k.add_argument("--preset", help="named path: " + ", ".join(sorted(exact.PATH_PRESETS)))
    k.add_argument("--max-steps", type=int, default=None)
    k.set_defaults(run=cmd_continue)

    w = sub.add_parser("kw", parents=[common, field_args], help="Kazdan-Warner integrals and sign certificate")
    w.add_argument("--u", help="conformal factor file (default u = 0)")
    w.add_argument("--output", help="report path (default OUT/kw.json)")
    w.set_defaults(run=cmd_kw)

    v = sub.add_parser("validate", parents=[common], help="run the closed-form oracle checks")
    v.add_argument("--output", help="optional JSON report path")
    v.set_defaults(run=cmd_validate)

    e = sub.add_parser("export-grid", parents=[common, field_args], help="field values on the quadrature grid as CSV")
    e.add_argument("--curvature", action="store_true", help="treat the field (or the preset solution) as u and export its curvature")
    e.add_argument("--output", help="CSV path (default OUT/grid.csv)")
    e.set_defaults(run=cmd_export_grid)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.lmax is None:
            args.lmax = _default_lmax()
        if args.lmax < 1:
            raise UsageError("--lmax must be positive")
        return args.run(args)
    except UsageError as exc:
        print(f"nirenberg: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FieldFormatError as exc:
        print(f"nirenberg: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NotInvariant as exc:
        print(f"nirenberg: {exc}", file=sys.stderr)
        return EXIT_NOT_INVARIANT
    except NotInCPlus as exc:
        # no positive values: no metric can have this curvature
        print(f"nirenberg: {exc}", file=sys.stderr)
        return EXIT_OBSTRUCTED
    except (NirenbergError, ValueError) as exc:
        print(f"nirenberg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
