"""Command-line interface.

Exit codes: 0 success, 2 infeasible (or failed check), 3 solver did not
converge, 4 input error. Heavy imports happen inside the handlers so that
``--threads`` can seed the BLAS environment before numpy loads.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_NONCONVERGED = 3
EXIT_INPUT = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exit code collides with ours
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_INPUT)


def _add_common(p, with_mode=True):
    p.add_argument("--lambda", dest="lam", type=float, default=0.1,
                   help="rotation penalty weight (default 0.1)")
    p.add_argument("--cost", choices=["quadratic-linear", "quadratic-circular"],
                   default="quadratic-linear", help="ground cost kind")
    p.add_argument("--period", type=float, default=None,
                   help="period for the circular cost (default 2*pi)")
    if with_mode:
        p.add_argument("--mode", choices=["full", "restricted"], default="full",
                       help="plan family: full tensor plans or the "
                            "orientation-fixed metric (default full)")
    p.add_argument("--tol-primal", type=float, default=1e-7)
    p.add_argument("--tol-dual", type=float, default=1e-7)
    p.add_argument("--max-iter", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0,
                   help="seed for restart perturbations (restricted geodesics)")
    p.add_argument("--manifest", default=None,
                   help="run manifest path (a default is chosen per command)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="matrixot",
        description="Optimal mass transport between matrix-valued densities.",
    )
    parser.add_argument("--threads", type=int, default=1,
                        help="BLAS thread cap (default 1 for reproducibility)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distance", help="transport cost or metric between two densities")
    p.add_argument("mu0")
    p.add_argument("mu1")
    _add_common(p)
    p.set_defaults(handler=cmd_distance)

    p = sub.add_parser("transport", help="solve for a plan and write it as CSV")
    p.add_argument("mu0")
    p.add_argument("mu1")
    p.add_argument("--plan-out", required=True)
    p.add_argument("--support-out", default=None)
    p.add_argument("--naive", action="store_true",
                   help="instead of solving, test naive single-field coupling "
                        "feasibility; exits 2 with a certificate if infeasible")
    _add_common(p)
    p.set_defaults(handler=cmd_transport)

    p = sub.add_parser("geodesic", help="interpolate between two densities")
    p.add_argument("mu0")
    p.add_argument("mu1")
    p.add_argument("--segments", "-N", type=int, default=8)
    p.add_argument("--out-dir", required=True)
    _add_common(p)
    p.set_defaults(handler=cmd_geodesic)

    p = sub.add_parser("example", help="write the built-in 2x2 spectra pair")
    p.add_argument("--grid-size", type=int, default=64)
    p.add_argument("--out-prefix", default="example",
                   help="writes <prefix>_mu0.json and <prefix>_mu1.json")
    p.set_defaults(handler=cmd_example)

    p = sub.add_parser("check", help="validate a plan file against marginals")
    p.add_argument("plan")
    p.add_argument("mu0")
    p.add_argument("mu1")
    _add_common(p, with_mode=False)
    p.add_argument("--bound", type=float, default=None,
                   help="monotone-support area bound (default 4*lambda)")
    p.add_argument("--threshold", type=float, default=None,
                   help="support mass threshold (default 1e-7 of total mass)")
    p.add_argument("--require-monotone", action="store_true",
                   help="fail when the support violates the area bound "
                        "(a membership property of optimal plans only, so "
                        "informational by default)")
    p.set_defaults(handler=cmd_check)

    return parser


def _config(args, lam=None):
    from .full import SolverConfig

    return SolverConfig(
        lam=args.lam if lam is None else lam,
        cost_kind=args.cost,
        tol_primal=args.tol_primal,
        tol_dual=args.tol_dual,
        max_iter=args.max_iter,
        seed=args.seed,
    )


def _ground_cost(args, mu0, mu1):
    import math

    from .full import GroundCost

    period = args.period if args.period is not None else 2.0 * math.pi
    return GroundCost.for_kind(args.cost, mu0.grid, mu1.grid, period)


def _load_pair(args):
    from .io import load_density

    mu0 = load_density(args.mu0)
    mu1 = load_density(args.mu1)
    if mu0.dim != mu1.dim:
        raise SystemExit(_input_error("density dimensions differ"))
    # Inputs already normalized to roundoff pass through verbatim, so
    # emitted boundary densities equal the inputs byte for value.
    if abs(mu0.total_mass - 1.0) > 1e-12:
        mu0 = mu0.normalized()
    if abs(mu1.total_mass - 1.0) > 1e-12:
        mu1 = mu1.normalized()
    return mu0, mu1


def _input_error(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_INPUT


def cmd_distance(args) -> int:
    from .full import solve_full
    from .io import RunManifest
    from .restricted import d2lambda

    mu0, mu1 = _load_pair(args)
    cost = _ground_cost(args, mu0, mu1)
    cfg = _config(args)
    manifest = RunManifest.create(
        "distance", [args.mu0, args.mu1], cfg, {"mode": args.mode}
    )
    start = time.perf_counter()
    if args.mode == "restricted":
        res = d2lambda(mu0, mu1, cost, cfg.lam)
        value, converged, iterations = res.value, True, 1
        residual = 0.0
    else:
        res = solve_full(mu0, mu1, cost, cfg)
        value, converged, iterations = res.value, res.converged, res.iterations
        residual = res.primal_residual
    elapsed = time.perf_counter() - start
    print(f"{value:.12g}")
    manifest.results = {
        "value": value,
        "converged": converged,
        "iterations": iterations,
        "primal_residual": residual,
        "wall_time_s": elapsed,
    }
    manifest.write(args.manifest or "matrixot_distance_manifest.json")
    return EXIT_OK if converged else EXIT_NONCONVERGED


def cmd_transport(args) -> int:
    from .full import naive_feasibility, solve_full, transport_cost
    from .io import RunManifest, save_plan_csv, save_support_csv
    from .properties import support_set
    from .restricted import d2lambda

    mu0, mu1 = _load_pair(args)
    cost = _ground_cost(args, mu0, mu1)
    cfg = _config(args)

    if args.naive:
        res = naive_feasibility(mu0, mu1)
        if res.status == "infeasible":
            cert = res.certificate
            print("naive coupling infeasible:")
            print(f"  certificate pairing      {cert.pairing:.6g}")
            print(f"  max certificate block eig {cert.max_block_eig:.3e}")
            print(f"  projection gap           {res.gap:.6g}")
            return EXIT_INFEASIBLE
        if res.status == "non-converged":
            print("naive feasibility undecided (projection did not converge)")
            return EXIT_NONCONVERGED
        print(f"naive coupling feasible (residual {res.gap:.3e})")
        return EXIT_OK

    manifest = RunManifest.create(
        "transport", [args.mu0, args.mu1], cfg, {"mode": args.mode}
    )
    start = time.perf_counter()
    if args.mode == "restricted":
        res = d2lambda(mu0, mu1, cost, cfg.lam)
        plan = res.plan.to_full_plan()
        value = res.squared
        converged, iterations, residual = True, 1, 0.0
    else:
        res = solve_full(mu0, mu1, cost, cfg)
        plan, value = res.plan, res.value
        converged, iterations, residual = (
            res.converged, res.iterations, res.primal_residual
        )
    elapsed = time.perf_counter() - start
    save_plan_csv(args.plan_out, plan)
    if args.support_out:
        save_support_csv(args.support_out, support_set(plan).points)
    print(f"value {value:.12g}")
    print(f"plan written to {args.plan_out}")
    manifest.results = {
        "value": value,
        "converged": converged,
        "iterations": iterations,
        "primal_residual": residual,
        "wall_time_s": elapsed,
    }
    manifest.write(args.manifest or args.plan_out + ".manifest.json")
    return EXIT_OK if converged else EXIT_NONCONVERGED


def cmd_geodesic(args) -> int:
    from .geodesic import interpolate
    from .io import RunManifest, save_channel_csv, save_density

    mu0, mu1 = _load_pair(args)
    cost = _ground_cost(args, mu0, mu1)
    cfg = _config(args)
    manifest = RunManifest.create(
        "geodesic", [args.mu0, args.mu1], cfg,
        {"mode": args.mode, "segments": args.segments},
    )
    os.makedirs(args.out_dir, exist_ok=True)
    start = time.perf_counter()
    path = interpolate(mu0, mu1, args.segments, cost, cfg, mode=args.mode)
    elapsed = time.perf_counter() - start
    for k, density in enumerate(path.densities):
        save_density(os.path.join(args.out_dir, f"tau_{k:02d}.json"), density)
    save_channel_csv(
        os.path.join(args.out_dir, "channels.csv"), path.taus, path.densities
    )
    print(f"total cost {path.total_value:.12g}")
    print(f"segment costs {' '.join(f'{v:.6g}' for v in path.segment_values)}")
    print(f"densities and channels.csv written to {args.out_dir}")
    manifest.results = {
        "total_value": path.total_value,
        "segment_values": path.segment_values.tolist(),
        "converged": path.converged,
        "iterations": path.iterations,
        "wall_time_s": elapsed,
    }
    manifest.write(args.manifest or os.path.join(args.out_dir, "manifest.json"))
    return EXIT_OK if path.converged else EXIT_NONCONVERGED


def cmd_example(args) -> int:
    from .io import save_density
    from .spectra import build_paper_pair, default_grid

    if args.grid_size < 2:
        return _input_error("grid size must be at least 2")
    mu0, mu1 = build_paper_pair(default_grid(args.grid_size))
    save_density(f"{args.out_prefix}_mu0.json", mu0)
    save_density(f"{args.out_prefix}_mu1.json", mu1)
    print(f"wrote {args.out_prefix}_mu0.json and {args.out_prefix}_mu1.json")
    return EXIT_OK


def cmd_check(args) -> int:
    from .full import transport_cost
    from .io import load_plan_csv
    from .properties import check_lambda_monotone, support_set

    mu0, mu1 = _load_pair(args)
    plan = load_plan_csv(args.plan)
    cost = _ground_cost(args, mu0, mu1)
    bound = args.bound if args.bound is not None else 4.0 * args.lam

    report = plan.membership_report(mu0, mu1)
    failures = []
    if report["trace_coupling"] > 1e-9:
        failures.append("trace-coupling")
    if max(report["row_marginal"], report["col_marginal"]) > 1e-7:
        failures.append("marginals")
    if report["min_block_eigenvalue"] < -1e-10:
        failures.append("block-psd")
    support = support_set(plan, args.threshold)
    mono = check_lambda_monotone(support, bound)
    if not mono.passed and args.require_monotone:
        failures.append("monotone-support")
    value = transport_cost(plan, cost, args.lam)

    print(f"trace coupling residual  {report['trace_coupling']:.3e}")
    print(f"row marginal residual    {report['row_marginal']:.3e}")
    print(f"col marginal residual    {report['col_marginal']:.3e}")
    print(f"min block eigenvalue     {report['min_block_eigenvalue']:.3e}")
    print(f"support size             {len(support)}")
    print(f"monotone bound {bound:g}: worst area {mono.worst_area:.3e}"
          + ("" if mono.passed else f" VIOLATION at {mono.worst_pair}"))
    print(f"recomputed cost          {value:.12g}")
    if failures:
        print("FAIL: " + ", ".join(failures))
        return EXIT_INFEASIBLE
    print("PASS")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT
    threads = str(max(1, args.threads))
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, threads)
    try:
        return args.handler(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT
    except Exception as exc:  # input/validation problems surface as exit 4
        from .io import InputError

        if isinstance(exc, (InputError, ValueError, OSError)):
            return _input_error(str(exc))
        raise


if __name__ == "__main__":
    sys.exit(main())
