"""Command-line front end: reproducible batch runs with serialized reports.

Subcommands: verify | solve | factorize | scan | residuals.
Exit codes: 0 success / no violations, 1 violations found, 2 invalid input,
3 convergence failure, 4 I/O error.
"""

import argparse
import sys
import time

import numpy as np

from . import beltrami, graphsolve, ineqlab, matcore, serialization
from .errors import ConvergenceError, InvalidInputError, MinsurfError
from .mesh import disc_mesh, unit_square_mesh

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_INVALID = 2
EXIT_NO_CONVERGENCE = 3
EXIT_IO = 4

SCAN_KINDS = (
    "rank1-convexity",
    "rank1-hessian",
    "small-det",
    "sptnull",
    "boundedness",
)


def _read_config(path):
    """Flat key=value config file; blank lines and # comments ignored."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidInputError(f"{path}:{lineno}: expected key=value")
            key, val = line.split("=", 1)
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def _merge_config(args, parser):
    """Apply config-file values for options the command line left at default."""
    if not getattr(args, "config", None):
        return args
    file_vals = _read_config(args.config)
    cli_given = {
        a.split("=", 1)[0].lstrip("-").replace("-", "_")
        for a in sys.argv[1:]
        if a.startswith("--")
    }
    for key, raw in file_vals.items():
        if key in cli_given or not hasattr(args, key):
            continue
        current = getattr(args, key)
        if isinstance(current, bool):
            setattr(args, key, raw.lower() in ("1", "true", "yes", "on"))
        elif isinstance(current, int):
            setattr(args, key, int(raw))
        elif isinstance(current, float):
            setattr(args, key, float(raw))
        else:
            setattr(args, key, raw)
    return args


def _write_report(doc, out_path):
    if out_path:
        serialization.dump_json(doc, out_path)
    else:
        sys.stdout.write(serialization.dumps(doc) + "\n")


def _build_mesh(args):
    if args.domain == "disc":
        return disc_mesh(args.resolution)
    if args.domain == "square":
        return unit_square_mesh(args.resolution)
    raise InvalidInputError(f"unknown domain {args.domain!r}")


def cmd_verify(args):
    report = matcore.verify_identities(
        n=args.n, samples=args.samples, seed=args.seed,
        tol=args.tol, threads=args.threads,
    )
    _write_report(report.to_dict(), args.out)
    return EXIT_OK if report.ok else EXIT_VIOLATIONS


def cmd_scan(args):
    cfg = ineqlab.ScanConfig(
        Lam=args.lambda_bound, K=args.K, eps3=args.eps3, L=args.L,
        n=args.n, samples=args.samples, seed=args.seed, tol=args.tol,
    )
    if args.kind == "rank1-convexity":
        report = ineqlab.convexity_rank_one_scan(cfg, threads=args.threads)
    elif args.kind == "rank1-hessian":
        report = ineqlab.hessian_rank_one_scan(cfg, threads=args.threads)
    elif args.kind == "small-det":
        lam = args.lam if args.lam is not None else 0.5 * (1 + cfg.Lam**2) ** -1.5
        report = ineqlab.small_det_convexity_scan(cfg, lam=lam, threads=args.threads)
    elif args.kind == "sptnull":
        report = ineqlab.sptnull_scan(cfg, threads=args.threads)
    elif args.kind == "boundedness":
        report = matcore.boundedness_scan(
            n=args.n, K=args.K, L=args.L, seed=args.seed, threads=args.threads
        )
        _write_report(report.to_dict(), args.out)
        return EXIT_OK if report.ok else EXIT_VIOLATIONS
    else:
        raise InvalidInputError(f"unknown scan kind {args.kind!r}")
    _write_report(report.to_dict(), args.out)
    return EXIT_OK if report.ok else EXIT_VIOLATIONS


def _solve_one(mesh, args):
    bv = graphsolve.boundary_preset(
        args.preset, mesh.nodes[mesh.boundary], scale=args.scale
    )
    if args.n == 1 and bv.ndim == 2:
        bv = bv[:, :1]
    cfg = graphsolve.SolveConfig(tol=args.tol, max_iter=args.max_iter)
    return graphsolve.minimize(bv, mesh, cfg)


def cmd_solve(args):
    mesh = _build_mesh(args)
    rows = []
    try:
        u = _solve_one(mesh, args)
    except ConvergenceError as e:
        if args.out and e.last_iterate is not None:
            serialization.dump_json(
                serialization.map_to_dict(e.last_iterate), args.out
            )
        raise
    rows.append(
        (args.resolution, mesh.h, graphsolve.assemble_energy(u),
         beltrami.outer_residual(u), graphsolve.inner_variation_residual(u))
    )
    for _ in range(args.refine_sweep):
        res = rows[-1][0] * 2
        args_level = argparse.Namespace(**vars(args))
        args_level.resolution = res
        m2 = _build_mesh(args_level)
        u = _solve_one(m2, args_level)
        rows.append(
            (res, m2.h, graphsolve.assemble_energy(u),
             beltrami.outer_residual(u), graphsolve.inner_variation_residual(u))
        )
    if args.out:
        serialization.dump_json(serialization.map_to_dict(u), args.out)
    if args.residual_csv:
        serialization.dump_csv(
            ["resolution", "h", "energy", "outer_residual", "inner_residual"],
            [tuple(float(x) if i else int(x) for i, x in enumerate(r)) for r in rows],
            args.residual_csv,
        )
    doc = {
        "schema": "minsurf/solve-report@1",
        "domain": args.domain,
        "preset": args.preset,
        "levels": [
            {
                "resolution": int(r[0]), "h": float(r[1]), "energy": float(r[2]),
                "outer_residual": float(r[3]), "inner_residual": float(r[4]),
            }
            for r in rows
        ],
    }
    sys.stdout.write(serialization.dumps(doc) + "\n")
    return EXIT_OK


def cmd_factorize(args):
    if not args.input:
        raise InvalidInputError("factorize requires --input map file")
    u = serialization.map_from_dict(serialization.load_json(args.input))
    phi, v, report = beltrami.factorize(u, tol=args.tol)
    labels = beltrami.classify_regions(
        v, tol_grad=args.tol_grad, tol_minor=args.tol_minor
    )
    doc = {
        "schema": "minsurf/factorize-report@1",
        "report": report,
        "harmonic_residual": beltrami.harmonic_residual(v),
        "region_counts": labels.counts(),
    }
    if args.phi_out:
        serialization.dump_json(
            serialization.map_to_dict(graphsolve.DiscreteMap(phi.mesh, phi.values)),
            args.phi_out,
        )
    if args.v_out:
        serialization.dump_json(serialization.map_to_dict(v), args.v_out)
    _write_report(doc, args.out)
    return EXIT_OK


def cmd_residuals(args):
    if not args.input:
        raise InvalidInputError("residuals requires --input map file")
    u = serialization.map_from_dict(serialization.load_json(args.input))
    labels = beltrami.classify_regions(
        u, tol_grad=args.tol_grad, tol_minor=args.tol_minor
    )
    doc = {
        "schema": "minsurf/residual-report@1",
        "energy": graphsolve.assemble_energy(u),
        "outer_residual": beltrami.outer_residual(u),
        "inner_residual": graphsolve.inner_variation_residual(u),
        "harmonic_residual": beltrami.harmonic_residual(u),
        "small_det": graphsolve.small_det_check(u, args.eps),
        "region_counts": labels.counts(),
    }
    _write_report(doc, args.out)
    return EXIT_OK


def _add_shared(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None, help="output report path (default stdout)")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--config", default=None, help="flat key=value config file")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="minsurf",
        description="Area-integrand algebra, Beltrami factorization, and "
        "inequality scans for minimal graphs.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="randomized algebraic identity suite")
    _add_shared(p)
    p.add_argument("--n", type=int, default=3, help="codimension")
    p.add_argument("--samples", type=int, default=100000)
    p.set_defaults(func=cmd_verify, tol_default=1e-9)

    p = sub.add_parser("scan", help="inequality scans")
    _add_shared(p)
    p.add_argument("--kind", required=True, choices=SCAN_KINDS)
    p.add_argument("--lambda-bound", type=float, default=2.0,
                   dest="lambda_bound", help="gradient bound")
    p.add_argument("--K", type=float, default=4.0)
    p.add_argument("--eps3", type=float, default=0.5)
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--lam", type=float, default=None,
                   help="target convexity constant for --kind small-det")
    p.set_defaults(func=cmd_scan, tol_default=1e-6)

    p = sub.add_parser("solve", help="minimize the discrete area energy")
    _add_shared(p)
    p.add_argument("--domain", choices=("disc", "square"), default="disc")
    p.add_argument("--resolution", type=int, default=16,
                   help="rings (disc) or cells per side (square)")
    p.add_argument("--preset", choices=("affine", "zsq"), default="zsq")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--n", type=int, default=2, help="codimension")
    p.add_argument("--max-iter", type=int, default=2000, dest="max_iter")
    p.add_argument("--refine-sweep", type=int, default=0, dest="refine_sweep",
                   help="extra levels at doubled resolution")
    p.add_argument("--residual-csv", default=None, dest="residual_csv")
    p.set_defaults(func=cmd_solve, tol_default=1e-8)

    p = sub.add_parser("factorize", help="quasiconformal factorization of a map")
    _add_shared(p)
    p.add_argument("--input", default=None, help="DiscreteMap JSON file")
    p.add_argument("--phi-out", default=None, dest="phi_out")
    p.add_argument("--v-out", default=None, dest="v_out")
    p.add_argument("--tol-grad", type=float, default=1e-3, dest="tol_grad")
    p.add_argument("--tol-minor", type=float, default=1e-3, dest="tol_minor")
    p.set_defaults(func=cmd_factorize, tol_default=1e-6)

    p = sub.add_parser("residuals", help="residual battery for a stored map")
    _add_shared(p)
    p.add_argument("--input", default=None, help="DiscreteMap JSON file")
    p.add_argument("--eps", type=float, default=1.0, help="minor bound to check")
    p.add_argument("--tol-grad", type=float, default=1e-3, dest="tol_grad")
    p.add_argument("--tol-minor", type=float, default=1e-3, dest="tol_minor")
    p.set_defaults(func=cmd_residuals, tol_default=1e-8)
    return ap


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _merge_config(args, parser)
        if args.tol is None:
            args.tol = args.tol_default
        start = time.perf_counter()
        code = args.func(args)
        print(f"wall time: {time.perf_counter() - start:.3f}s", file=sys.stderr)
        return code
    except ConvergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        if e.history:
            print(f"history: {e.history}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except InvalidInputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except MinsurfError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
