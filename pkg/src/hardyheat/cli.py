"""Command line interface.

Subcommands: constants, assemble, evolve, kernel, verify, sweep.  Global
flags: --out (store root; default $HARDYHEAT_OUT or ./hardyheat-runs),
--force, --threads, --seed.  Exit codes: 0 all good, 1 failed checks or a
violated invariant, 2 configuration/contract errors.

Heavy imports happen after argument parsing so that --threads can pin the
BLAS thread count through the environment before numpy loads; the effective
setting is recorded in every report.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hardyheat",
        description="Fractional Dirichlet heat flow with an inverse-power potential",
    )
    ap.add_argument("--out", default=None, help="run store root (default $HARDYHEAT_OUT or ./hardyheat-runs)")
    ap.add_argument("--force", action="store_true", help="ignore cached reports")
    ap.add_argument("--threads", type=int, default=None, help="pin BLAS/OpenMP thread count")
    ap.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="print A(d,alpha), c*, beta* (and beta(c)) as JSON")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--c", default=None, help='coupling, number or "F*cstar"')

    p = sub.add_parser("assemble", help="assemble an operator and write the CSV+JSON artifact")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--domain", required=True, help="a,b for d=1 or a1,b1,a2,b2 for d=2")
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--c", default="0", help='coupling, number or "F*cstar"')
    p.add_argument("--k", type=float, default=None, help="potential truncation level")
    p.add_argument("--name", default=None, help="artifact base name (default: scenario hash)")

    p = sub.add_parser("evolve", help="run a scenario evolution, write per-time CSV states")
    p.add_argument("--scenario", required=True)
    p.add_argument("--scheme", default=None, help="override the scenario scheme")

    p = sub.add_parser("kernel", help="write a heat-kernel matrix as CSV triples")
    p.add_argument("--scenario", required=True)
    p.add_argument("--t", type=float, required=True, help="time in T_ref units")

    p = sub.add_parser("verify", help="run a check suite on a scenario")
    p.add_argument("--suite", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--report", default=None, help="also copy the report JSON here")

    p = sub.add_parser("sweep", help="verify a suite across many scenario files")
    p.add_argument("--suite", required=True)
    p.add_argument("--scenarios", nargs="+", required=True)
    return ap


def _apply_threads(n: int | None) -> None:
    if n is None:
        return
    if n < 1:
        print(f"error: --threads must be >= 1, got {n}", file=sys.stderr)
        raise SystemExit(2)
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _store_root(args) -> str:
    if args.out:
        return args.out
    return os.environ.get("HARDYHEAT_OUT", "./hardyheat-runs")


def _parse_coupling(spec, params) -> float:
    from .errors import ConfigError
    from .specfun import hardy_constant

    if spec is None:
        raise ConfigError("coupling required")
    try:
        return float(spec)
    except (TypeError, ValueError):
        pass
    s = str(spec).strip()
    if s.endswith("*cstar"):
        try:
            return float(s[: -len("*cstar")].rstrip().rstrip("*").strip()) * hardy_constant(params)
        except ValueError:
            pass
    raise ConfigError(f'bad coupling {spec!r}; use a number or "F*cstar"')


def _cmd_constants(args) -> int:
    from .specfun import FractionalParams, beta_of_c, hardy_constant, intensity_constant

    params = FractionalParams(d=args.d, alpha=args.alpha)
    out = {
        "d": params.d,
        "alpha": params.alpha,
        "intensity": intensity_constant(params),
        "c_star": hardy_constant(params),
        "beta_star": params.beta_star,
    }
    if args.c is not None:
        c = _parse_coupling(args.c, params)
        out["c"] = c
        out["beta"] = beta_of_c(c, params)
    print(json.dumps(out, sort_keys=True, indent=2))
    return 0


def _cmd_assemble(args) -> int:
    from .grids import build_grid
    from .operators import assemble_operator, save_operator
    from .runstore import RunStore
    from .specfun import FractionalParams

    params = FractionalParams(d=args.d, alpha=args.alpha)
    vals = [float(v) for v in args.domain.split(",")]
    domain = vals if len(vals) == 2 else [vals[0:2], vals[2:4]]
    grid = build_grid(domain, args.h)
    c = _parse_coupling(args.c, params)
    op = assemble_operator(grid, params, c=c, k=args.k)
    store = RunStore(_store_root(args))
    name = args.name or f"op-d{args.d}-a{args.alpha:g}-h{args.h:g}-c{c:.6g}"
    csv_path, json_path = save_operator(op, store.path("operators", name))
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    return 0


def _load_scenario_with_overrides(args, suite=None):
    import dataclasses

    from .scenario import load_scenario

    scn = load_scenario(args.scenario, suite=suite)
    if args.seed is not None:
        scn = dataclasses.replace(scn, seed=args.seed)
    if getattr(args, "scheme", None):
        scn = dataclasses.replace(scn, scheme=args.scheme)
    return scn


def _cmd_evolve(args) -> int:
    import numpy as np

    from .estimators import t_ref
    from .evolution import minimal_solution
    from .grids import build_grid
    from .operators import assemble_operator
    from .runstore import RunStore
    from .scenario import build_u0

    scn = _load_scenario_with_overrides(args)
    store = RunStore(_store_root(args))
    outdir = store.path("trajectories", scn.run_id())
    report_path = os.path.join(outdir, "report.json")
    if os.path.exists(report_path) and not args.force:
        print(f"cached: {outdir}")
        return 0
    os.makedirs(outdir, exist_ok=True)
    grid = build_grid(scn.domain_spec(), scn.h_levels[-1])
    op = assemble_operator(grid, scn.params, c=scn.c, k=None)
    times = scn.resolve_times(t_ref(op))
    u0 = build_u0(scn.u0_spec, grid)
    if scn.c > 0.0:
        traj, rep = minimal_solution(op, u0, times, k_schedule=scn.k_schedule, scheme=scn.scheme)
    else:
        from .evolution import evolve as _evolve

        traj = _evolve(op, u0, times, scheme=scn.scheme)
        rep = {"mode": "free", "converged": True, "converged_by": "no potential"}
    coords = grid.nodes if grid.dim > 1 else grid.nodes[:, None]
    head = ",".join(f"x{i + 1}" for i in range(grid.dim)) + ",u"
    for idx, (t, state) in enumerate(zip(traj.times, traj.states)):
        rows = [head]
        for pt, val in zip(coords, state):
            rows.append(",".join(repr(float(v)) for v in pt) + f",{float(val)!r}")
        with open(os.path.join(outdir, f"state_{idx:03d}.csv"), "w") as fh:
            fh.write("\n".join(rows) + "\n")
    rep_out = {
        "scenario": scn.to_dict(),
        "times": [float(t) for t in traj.times],
        "files": [f"state_{i:03d}.csv" for i in range(len(traj.times))],
        "scheme": traj.scheme,
        "report": _jsonable(rep),
    }
    with open(report_path, "w") as fh:
        json.dump(rep_out, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"wrote {outdir}")
    return 0


def _cmd_kernel(args) -> int:
    from .estimators import t_ref
    from .evolution import heat_kernel
    from .grids import build_grid
    from .operators import assemble_operator
    from .runstore import RunStore

    scn = _load_scenario_with_overrides(args)
    if args.t <= 0:
        from .errors import ContractError

        raise ContractError(f"kernel time must be positive, got {args.t}")
    store = RunStore(_store_root(args))
    grid = build_grid(scn.domain_spec(), scn.h_levels[-1])
    op = assemble_operator(grid, scn.params, c=scn.c, k=None)
    t_abs = args.t * t_ref(op)
    ker = heat_kernel(op, t_abs)
    base = store.path("kernels", f"{scn.run_id()}-t{args.t:g}")
    rows = ["i,j,value"]
    n = grid.n
    for i in range(n):
        for j in range(i, n):
            rows.append(f"{i},{j},{ker.P[i, j]!r}")
    with open(base + ".csv", "w") as fh:
        fh.write("\n".join(rows) + "\n")
    header = {
        "scenario": scn.to_dict(),
        "t_factor": args.t,
        "t_absolute": t_abs,
        "n": n,
        "h": grid.h,
        "convention": "entries are exp(-tH)_ij / h^d (density)",
    }
    with open(base + ".json", "w") as fh:
        json.dump(header, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"wrote {base}.csv")
    return 0


def _print_checks(report: dict) -> None:
    for c in report["checks"]:
        status = "PASS" if c["pass"] else "FAIL"
        measured = c["measured"]
        if isinstance(measured, float):
            measured = f"{measured:.6g}"
        print(f"[{status}] {c['name']}: measured={measured} expected={c['expected']} tol={c['tolerance']}")


def _cmd_verify(args) -> int:
    from .runstore import RunStore

    scn = _load_scenario_with_overrides(args, suite=args.suite)
    store = RunStore(_store_root(args))
    report, cached = store.run(scn, args.suite, force=args.force)
    if cached:
        print(f"(cached report {scn.run_id()})")
    _print_checks(report)
    n_fail = sum(1 for c in report["checks"] if not c["pass"])
    print(f"suite={args.suite} checks={len(report['checks'])} failures={n_fail}")
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return 0 if report["passed"] else 1


def _cmd_sweep(args) -> int:
    import dataclasses

    from .runstore import RunStore
    from .scenario import load_scenario

    store = RunStore(_store_root(args))
    worst = 0
    for path in args.scenarios:
        scn = load_scenario(path, suite=args.suite)
        if args.seed is not None:
            scn = dataclasses.replace(scn, seed=args.seed)
        report, cached = store.run(scn, args.suite, force=args.force)
        n_fail = sum(1 for c in report["checks"] if not c["pass"])
        tag = "ok" if report["passed"] else f"{n_fail} FAILED"
        src = "cache" if cached else "run"
        print(f"{path}: {tag} ({len(report['checks'])} checks, {src})")
        if not report["passed"]:
            worst = 1
    return worst


def _jsonable(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


_COMMANDS = {
    "constants": _cmd_constants,
    "assemble": _cmd_assemble,
    "evolve": _cmd_evolve,
    "kernel": _cmd_kernel,
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    _apply_threads(args.threads)
    from .errors import ConfigError, ContractError, InvariantViolation, ParameterDomainError

    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ParameterDomainError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
