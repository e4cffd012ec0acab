"""Command line front end.

Five subcommands: solve (one Dirichlet problem), lemma (coercivity
sampling), dualize (conjugate correspondence with round-trip check),
uniqueness (level region, flux scan, Riccati comparison), decay (strip
truncation experiment).  All outputs are plain text keyed off --out;
identical command lines rewrite identical bytes.

Exit codes: 0 success, 1 usage or input error (also failed verification),
2 solver non-convergence, 3 empty level region (the two fields coincide at
the chosen level; not a failure).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .duality import maximal_conjugate, minimal_conjugate, round_trip_error
from .expressions import Expression, ExpressionError
from .lorentz import coercivity_constants, sample_coercivity
from .mesh import (ARTIFICIAL, Mesh, build_annulus, build_rectangle,
                   build_strip, load_mesh)
from .records import record_lines, write_record, write_csv
from .solver import (NonConvergenceError, SolverConfig, load_field,
                     save_field, solve)
from .uniqueness import (comparison_verdict, flux_scan, level_region,
                         perturbation_decay, radial_grid, riccati_comparison,
                         save_scan)

ODE_HEADER = "t,y"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ----------------------------------------------------------------------
# input plumbing
# ----------------------------------------------------------------------


def _config_tokens(path: str) -> list[str]:
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    tokens: list[str] = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise UsageError(f"config line is not key=value: {line!r}")
            tokens.append("--" + key.strip().replace("_", "-"))
            tokens.append(value.strip())
    return tokens


def _expand_config(argv: list[str]) -> list[str]:
    """Splice config-file key=value pairs in as flags, where they appear.

    Flags written after --config on the command line override the file.
    """
    out: list[str] = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok == "--config":
            if i + 1 >= len(argv):
                raise UsageError("--config requires a file path")
            out.extend(_config_tokens(argv[i + 1]))
            i += 2
        elif tok.startswith("--config="):
            out.extend(_config_tokens(tok.split("=", 1)[1]))
            i += 1
        else:
            out.append(tok)
            i += 1
    return out


def _thread_count() -> int:
    raw = os.environ.get("MAXSURF_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = -1
    if n < 0:
        raise UsageError(
            f"MAXSURF_THREADS must be a nonnegative integer, got {raw!r}")
    return n


def _positive(value: str, what: str) -> float:
    try:
        x = float(value)
    except ValueError:
        raise UsageError(f"{what} is not a number: {value!r}") from None
    if x <= 0:
        raise UsageError(f"{what} must be positive, got {value}")
    return x


def _build_mesh(args) -> Mesh:
    if getattr(args, "mesh", None):
        if args.shape:
            raise UsageError("give either --mesh or --shape, not both")
        return load_mesh(args.mesh)
    if not args.shape:
        raise UsageError("a mesh is required: --shape or --mesh")
    if args.h is None:
        raise UsageError("--shape requires --h")
    h = _positive(str(args.h), "--h")
    spec = args.shape
    kind, _, rest = spec.partition(":")
    sides = [s for s in (args.artificial or "").split(",") if s]
    if kind in ("rect", "strip"):
        dims = rest.split("x")
        if len(dims) != 2:
            raise UsageError(f"expected {kind}:LENGTHxHEIGHT, got {spec!r}")
        length = _positive(dims[0], "length")
        height = _positive(dims[1], "height")
        if kind == "strip":
            if sides:
                raise UsageError("strip ends are always artificial; "
                                 "--artificial does not apply")
            return build_strip(length, height, h)
        bad = set(sides) - {"left", "right", "bottom", "top"}
        if bad:
            raise UsageError(f"unknown rectangle side(s): {sorted(bad)}")
        return build_rectangle(length, height, h, artificial_sides=sides)
    if kind == "annulus":
        radii = rest.split(":")
        if len(radii) != 2:
            raise UsageError(f"expected annulus:RIN:ROUT, got {spec!r}")
        bad = set(sides) - {"inner", "outer"}
        if bad:
            raise UsageError(f"unknown annulus ring(s): {sorted(bad)}")
        return build_annulus(_positive(radii[0], "inner radius"),
                             _positive(radii[1], "outer radius"),
                             h, artificial_rings=sides)
    raise UsageError(f"unknown shape kind {kind!r} "
                     "(expected rect, strip, or annulus)")


def _eval_expression(text: str, mesh: Mesh) -> np.ndarray:
    try:
        vals = Expression(text)(mesh.vertices[:, 0], mesh.vertices[:, 1])
    except ExpressionError as exc:
        raise UsageError(f"bad expression {text!r}: {exc}") from None
    bad = ~np.isfinite(vals[mesh.constrained_vertices])
    if np.any(bad):
        raise UsageError(
            f"expression {text!r} is not finite on the boundary")
    return vals


def _boundary_values(spec: str, mesh: Mesh) -> np.ndarray:
    if spec.startswith("@"):
        return load_field(mesh, spec[1:])
    return _eval_expression(spec, mesh)


def _emit(items, path) -> None:
    write_record(path, items)
    for line in record_lines(items):
        print(line)


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------


def cmd_solve(args, threads: int) -> int:
    mesh = _build_mesh(args)
    bc = _boundary_values(args.bc, mesh)
    config = SolverConfig(metric=args.metric, residual_tol=args.tol,
                          max_newton=args.max_newton)
    values, report = solve(mesh, bc, config)
    save_field(mesh, values, f"{args.out}_solution.csv")
    _emit(report.record_items(), f"{args.out}_report.txt")
    if not report.converged:
        print(f"not converged: {report.reason}", file=sys.stderr)
        return 2
    return 0


def cmd_lemma(args, threads: int) -> int:
    coercivity_constants(args.eps)  # validates the range before sampling
    report = sample_coercivity(args.eps, n_samples=args.samples,
                               seed=args.seed)
    _emit(report.record_items(), f"{args.out}_lemma.txt")
    return 0 if report.violations == 0 else 1


def cmd_dualize(args, threads: int) -> int:
    mesh = _build_mesh(args)
    field = load_field(mesh, args.infile)
    if args.direction == "min2max":
        conj = maximal_conjugate(mesh, field, args.closedness_tol)
    else:
        conj = minimal_conjugate(mesh, field, args.closedness_tol)
    err = round_trip_error(mesh, field, args.closedness_tol, args.direction)
    save_field(mesh, conj, f"{args.out}_conjugate.csv")
    _emit([("direction", args.direction),
           ("round_trip_error", err),
           ("closedness_tol", args.closedness_tol)],
          f"{args.out}_roundtrip.txt")
    return 0


def cmd_uniqueness(args, threads: int) -> int:
    mesh = _build_mesh(args)
    if args.v or args.vprime:
        if not (args.v and args.vprime):
            raise UsageError("--v and --vprime go together")
        v = load_field(mesh, args.v)
        vp = load_field(mesh, args.vprime)
    else:
        if not args.bc:
            raise UsageError("inline solves need --bc (plus --art0/--art1)")
        base = _boundary_values(args.bc, mesh)
        ends = mesh.vertex_class == ARTIFICIAL
        bc0, bc1 = base.copy(), base.copy()
        if args.art0 is not None:
            bc0[ends] = _eval_expression(args.art0, mesh)[ends]
        if args.art1 is not None:
            bc1[ends] = _eval_expression(args.art1, mesh)[ends]
        config = SolverConfig(metric="lorentz", residual_tol=args.tol)
        v, rep0 = solve(mesh, bc0, config)
        vp, rep1 = solve(mesh, bc1, config)
        for tag, rep in (("first", rep0), ("second", rep1)):
            if not rep.converged:
                print(f"{tag} solve did not converge: {rep.reason}",
                      file=sys.stderr)
                return 2

    region = level_region(mesh, v, vp)
    if region.empty:
        _emit([("empty_region", True),
               ("delta", region.delta),
               ("a", region.a)],
              f"{args.out}_verdict.txt")
        print("level region is empty: the fields coincide at this level",
              file=sys.stderr)
        return 3

    if args.radii:
        radii = np.array([_positive(r, "radius")
                          for r in args.radii.split(",")])
    else:
        radii = radial_grid(mesh, region, ratio=args.ratio)
    scan = flux_scan(mesh, v, vp, region, radii, tol_rel=args.tol_rel,
                     seg_len=args.seg_len)
    ode = riccati_comparison(scan.r0, scan.mu, scan.delta, scan.c_eps)
    verdict = comparison_verdict(scan, ode)
    save_scan(scan, f"{args.out}_scan.csv")
    write_csv(f"{args.out}_ode.csv", ODE_HEADER, [ode.t, ode.y])
    _emit(verdict.record_items(), f"{args.out}_verdict.txt")
    return 0 if scan.n_flagged == 0 else 1


def cmd_decay(args, threads: int) -> int:
    lengths = [_positive(tok, "length") for tok in args.lengths.split(",")]
    phi = None
    if args.phi is not None:
        try:
            phi = Expression(args.phi)
        except ExpressionError as exc:
            raise UsageError(f"bad expression {args.phi!r}: {exc}") from None
    table = perturbation_decay(lengths, s=args.s, phi=phi,
                               height=args.height, h=args.h,
                               metric=args.metric, threads=threads)
    table.save(f"{args.out}_decay.csv")
    for length, diff in zip(table.lengths, table.diffs):
        print(f"L={length:g} diff={diff:.17g}")
    return 0 if table.strictly_decreasing else 1


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------


def _add_mesh_flags(sub, shapes: str) -> None:
    sub.add_argument("--shape", help=f"mesh shape, one of {shapes}")
    sub.add_argument("--h", type=float, help="target edge length")
    sub.add_argument("--mesh", help="load a saved mesh file instead")
    sub.add_argument("--artificial",
                     help="comma list of artificial boundary parts "
                          "(rect: left,right,bottom,top; annulus: inner,outer)")


def _add_common(sub) -> None:
    sub.add_argument("--out", default="out", help="output file prefix")
    sub.add_argument("--config", help="key=value file spliced in as flags")


def build_parser() -> _Parser:
    parser = _Parser(prog="maxsurf", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("solve", description="Solve one Dirichlet problem.")
    _add_mesh_flags(sub, "rect:LxH, strip:LxH, annulus:RIN:ROUT")
    sub.add_argument("--metric", choices=("lorentz", "euclid"),
                     default="lorentz")
    sub.add_argument("--bc", required=True,
                     help="boundary data: expression in x,y,r or @field.csv")
    sub.add_argument("--tol", type=float, default=1e-10,
                     help="residual tolerance")
    sub.add_argument("--max-newton", type=int, default=50)
    _add_common(sub)
    sub.set_defaults(handler=cmd_solve)

    sub = subs.add_parser("lemma",
                          description="Sample the coercivity inequality.")
    sub.add_argument("--eps", type=float, required=True,
                     help="gradient margin, in (0, 1]")
    sub.add_argument("--samples", type=int, default=100_000)
    sub.add_argument("--seed", type=int, default=0)
    _add_common(sub)
    sub.set_defaults(handler=cmd_lemma)

    sub = subs.add_parser("dualize",
                          description="Conjugate a solution and round-trip it.")
    _add_mesh_flags(sub, "rect:LxH (must be simply connected)")
    sub.add_argument("--in", dest="infile", required=True,
                     help="solution field CSV")
    sub.add_argument("--direction", choices=("min2max", "max2min"),
                     required=True)
    sub.add_argument("--closedness-tol", type=float, default=1e-9)
    _add_common(sub)
    sub.set_defaults(handler=cmd_dualize)

    sub = subs.add_parser(
        "uniqueness",
        description="Level region, flux scan, and Riccati comparison "
                    "for a pair of fields.")
    _add_mesh_flags(sub, "annulus:RIN:ROUT (circles are origin-centered)")
    sub.add_argument("--v", help="first field CSV")
    sub.add_argument("--vprime", help="second field CSV")
    sub.add_argument("--bc", help="shared true-boundary data (inline solves)")
    sub.add_argument("--art0", help="artificial data for the first solve")
    sub.add_argument("--art1", help="artificial data for the second solve")
    sub.add_argument("--tol", type=float, default=1e-10,
                     help="solver residual tolerance for inline solves")
    sub.add_argument("--radii", help="comma list; default: geometric grid")
    sub.add_argument("--ratio", type=float, default=1.1,
                     help="geometric grid ratio")
    sub.add_argument("--tol-rel", type=float, default=0.05,
                     help="relative slack for the inequality flags")
    sub.add_argument("--seg-len", type=float, default=None,
                     help="circle polyline segment length (default h/2)")
    _add_common(sub)
    sub.set_defaults(handler=cmd_uniqueness)

    sub = subs.add_parser("decay",
                          description="Boundary-perturbation decay on strips.")
    sub.add_argument("--lengths", required=True,
                     help="comma list, strictly increasing")
    sub.add_argument("--s", type=float, required=True,
                     help="artificial-end offset between the two solves")
    sub.add_argument("--phi", default=None,
                     help="true-boundary data expression (default 0)")
    sub.add_argument("--height", type=float, default=4.0)
    sub.add_argument("--h", type=float, default=0.25)
    sub.add_argument("--metric", choices=("lorentz", "euclid"),
                     default="lorentz")
    _add_common(sub)
    sub.set_defaults(handler=cmd_decay)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_expand_config(argv))
        threads = _thread_count()
        return args.handler(args, threads)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
