"""Command-line driver: radlimit <subcommand> --config cfg.json --out DIR."""

import argparse
import logging
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from .elliptic import LimitSolver
from .geometry import ConvexDomain, Slab
from .milne import BoundaryTemperatureMap, MilneSolver, assemble_operator, HalfLineGrid
from .sources import planar_source
from .study import (KERNEL_TABLE_HEADER, ConfigError, RunConfig, run_convergence_study,
                    run_kernel_table, write_csv, write_json)
from .transport import CartesianMesh, RadialMesh, SlabSolver
from .verify import (SupersolutionParams, check_supersolution, phi_eps,
                     positivity_harness)

log = logging.getLogger("radlimit")


def _field_rows(field):
    mesh = field.mesh
    if isinstance(mesh, RadialMesh):
        return ["r [L]", "u [u]"], np.column_stack([mesh.radii, field.values])
    if isinstance(mesh, CartesianMesh):
        return (["x [L]", "y [L]", "z [L]", "u [u]"],
                np.column_stack([mesh.centers, field.values]))
    return ["x [L]", "u [u]"], np.column_stack([mesh.x, field.values])


def _solve_transport(cfg, eps):
    domain, alpha, source = cfg.domain(), cfg.alpha(), cfg.source()
    if isinstance(domain, Slab):
        return SlabSolver(eps=eps, h0=cfg["milne"]["h0"]).fit(domain, source, alpha).field_
    return cfg.transport_solver(eps).fit(domain, source, alpha).field_


def cmd_kernel_table(args, cfg):
    rows = run_kernel_table(args.start, args.stop, args.step)
    write_csv(os.path.join(args.out, "kernel_table.csv"), KERNEL_TABLE_HEADER, rows)
    unit = np.max(np.abs(rows[:, 3] + rows[:, 4] - 1.0))
    pos = rows[:, 0] > 0
    mono = bool(np.all(np.diff(rows[pos, 1]) < 0)) if np.count_nonzero(pos) > 1 else True
    checks = {"head_plus_tail": {"passed": bool(unit <= 1e-14), "max_deviation": unit},
              "kernel_decreasing": {"passed": mono}}
    return {"config_hash": cfg.hash, "checks": checks}


def cmd_milne_solve(args, cfg):
    source = cfg.source()
    normal = np.asarray(args.normal, dtype=float)
    normal /= np.linalg.norm(normal)
    solver = MilneSolver(**cfg.milne_params()).fit(lambda y: planar_source(source, normal, y))
    prof = solver.profile_
    write_csv(os.path.join(args.out, "milne_profile.csv"), ["y [1]", "u [u]"],
              np.column_stack([prof.grid.nodes, prof.values]))
    scale = max(abs(solver.u_inf_), 1e-300)
    agree = abs(solver.u_inf_ - solver.u_inf_moment_) / scale
    checks = {"residual": {"passed": bool(solver.residual_ <= 1e-7 * max(scale, 1.0)),
                           "value": solver.residual_},
              "limit_estimators_agree": {"passed": bool(agree <= 1e-3), "relative_gap": agree}}
    return {"config_hash": cfg.hash, "u_inf": solver.u_inf_, "u_inf_moment": solver.u_inf_moment_,
            "decay_rate": solver.decay_rate_, "normal": normal, "checks": checks}


def cmd_boundary_map(args, cfg):
    domain = cfg.domain()
    if isinstance(domain, Slab):
        raise ConfigError("boundary-map needs a ball or ellipsoid domain")
    m = BoundaryTemperatureMap(samples=int(cfg["milne"]["samples"]), **cfg.milne_params())
    m.fit(domain, cfg.source(), cfg.alpha())
    write_csv(os.path.join(args.out, "boundary_map.csv"),
              ["x [L]", "y [L]", "z [L]", "nx [1]", "ny [1]", "nz [1]", "u_inf [u]",
               "u_inf_moment [u]"],
              np.column_stack([m.points_, m.normals_, m.u_inf_, m.u_inf_moment_]))
    ok = bool(np.all(m.u_inf_ >= 0))
    return {"config_hash": cfg.hash, "checks": {"nonnegative": {"passed": ok}}}


def cmd_transport_solve(args, cfg):
    checks = {}
    records = []
    for eps in cfg["eps"]:
        field = _solve_transport(cfg, eps)
        header, rows = _field_rows(field)
        write_csv(os.path.join(args.out, f"transport_eps{eps!r}.csv"), header, rows)
        scale = max(float(np.max(np.abs(field.values))), 1.0)
        ok = bool(np.min(field.values) >= -1e-10 * scale and field.contraction < 1)
        checks[f"eps={eps!r}"] = {"passed": ok, "min_value": float(np.min(field.values)),
                                  "contraction": field.contraction}
        records.append({"eps": eps, "iterations": field.iterations, "residual": field.residual,
                        "nodes": field.mesh.size})
    return {"config_hash": cfg.hash, "records": records, "checks": checks}


def cmd_elliptic_solve(args, cfg):
    from .study import _limit_data

    domain, alpha, source = cfg.domain(), cfg.alpha(), cfg.source()
    limit = _limit_data(cfg, domain, source, alpha)
    eps = cfg["eps"][-1]
    if isinstance(domain, Slab):
        mesh = SlabSolver(eps=eps).fit(domain, source, alpha).field_.mesh
        data = (limit["left"].u_inf_, limit["right"].u_inf_)
    elif domain.is_ball and source.is_isotropic():
        mesh = RadialMesh.graded(domain, eps, cfg["mesh"]["grading"])
        data = limit
    else:
        mesh = CartesianMesh(domain, int(cfg["mesh"]["n"]))
        data = limit
    field = LimitSolver().fit(mesh, data, alpha).field_
    header, rows = _field_rows(field)
    write_csv(os.path.join(args.out, "limit_field.csv"), header, rows)
    lo, hi = field.data_range()
    slack = 1e-10 * max(abs(lo), abs(hi), 1.0)
    ok = bool(np.min(field.values) >= lo - slack and np.max(field.values) <= hi + slack)
    return {"config_hash": cfg.hash, "checks": {"maximum_principle": {"passed": ok}}}


def cmd_convergence_study(args, cfg):
    report = run_convergence_study(cfg)
    report.write(args.out)
    return {"config_hash": cfg.hash, "checks": report.checks, "written": False}


def cmd_verify_suite(args, cfg):
    domain, alpha, source = cfg.domain(), cfg.alpha(), cfg.source()
    checks = {}
    op = assemble_operator(HalfLineGrid.graded(cfg["milne"]["y_max"], cfg["milne"]["h0"],
                                               cfg["milne"]["h_max"], cfg["milne"]["growth"]))
    rep = positivity_harness(op, trials=100, seed=args.seed)
    checks["milne_positivity"] = dict(rep.as_dict())
    flip = positivity_harness(op, trials=1, seed=args.seed, sign_flip=True)
    checks["milne_detects_sign_flip"] = {"passed": not flip.passed, "min_value": flip.min_value}
    margins = []
    if isinstance(domain, ConvexDomain):
        eps0 = cfg["eps"][0]
        solver = cfg.transport_solver(eps0).fit(domain, source, alpha)
        field = solver.field_
        rep = positivity_harness(solver.operator_, trials=20, seed=args.seed,
                                 picard_tol=cfg["tol"])
        checks["transport_positivity"] = dict(rep.as_dict())
        sp = cfg["supersolution"]
        params = SupersolutionParams.from_recipe(domain, alpha, mu=sp["mu"], C2=sp["C2"],
                                                 C3=sp["C3"], lam=sp["lam"])
        variant = "constant" if alpha.is_constant else "variable"
        rng = np.random.default_rng(args.seed)
        dirs = rng.normal(size=(12, 3))
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        probes = np.asarray(domain.center) + dirs * np.asarray(domain.semi_axes) * \
            rng.uniform(0.0, 0.99, size=(12, 1))
        for eps in cfg["eps"]:
            r = check_supersolution(params, eps, domain, alpha, probes, source.norm1, variant)
            margins.append({"eps": eps, "min_margin": r["min_margin"], "in_window": r["in_window"],
                            "margins": r["margin"], "distances": r["distance"]})
        phi = phi_eps(field.mesh.points, params, eps0, domain, source.norm1, variant)
        checks["supersolution_domination"] = {"passed": bool(np.min(phi - field.values) >= 0),
                                              "min_gap": float(np.min(phi - field.values))}
        nonneg = [m["eps"] for m in margins if m["min_margin"] >= 0]
        largest = max(nonneg) if nonneg else None
    else:
        params, largest = None, None
    return {"config_hash": cfg.hash, "checks": checks, "supersolution_margins": margins,
            "largest_eps_nonnegative_margin": largest,
            "supersolution_params": params.as_dict() if params is not None else None}


COMMANDS = {
    "kernel-table": cmd_kernel_table,
    "milne-solve": cmd_milne_solve,
    "boundary-map": cmd_boundary_map,
    "transport-solve": cmd_transport_solve,
    "elliptic-solve": cmd_elliptic_solve,
    "convergence-study": cmd_convergence_study,
    "verify-suite": cmd_verify_suite,
}


def build_parser():
    p = argparse.ArgumentParser(prog="radlimit",
                                description="Grey radiative transfer in the diffusion limit.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (defaults if omitted)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    common.add_argument("--threads", type=int, default=1, help="BLAS thread limit")
    common.add_argument("--quiet", action="store_true", help="only warnings and errors")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "kernel-table":
            sp.add_argument("--start", type=float, default=0.25)
            sp.add_argument("--stop", type=float, default=10.0)
            sp.add_argument("--step", type=float, default=0.25)
        if name == "milne-solve":
            sp.add_argument("--normal", type=float, nargs=3, default=(0.0, 0.0, 1.0),
                            help="outward boundary normal")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg = RunConfig.from_file(args.config)
        else:
            cfg = RunConfig.from_dict({})
        if args.seed is not None:
            cfg = RunConfig.from_dict({k: v for k, v in cfg.data.items()} | {"seed": args.seed})
        args.seed = cfg["seed"]
    except (ConfigError, OSError) as exc:
        print(f"radlimit: config rejected: {exc}", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    with threadpool_limits(limits=max(int(args.threads), 1)):
        try:
            result = COMMANDS[args.command](args, cfg)
        except (ConfigError, ValueError, ArithmeticError) as exc:
            print(f"radlimit {args.command}: {exc}", file=sys.stderr)
            return 1
    checks = result.get("checks", {})
    passed = all(c.get("passed", False) for c in checks.values())
    if result.pop("written", True):
        write_json(os.path.join(args.out, f"{args.command.replace('-', '_')}.json"),
                   dict(result, passed=passed))
    if not args.quiet:
        for name, c in checks.items():
            print(f"{'PASS' if c.get('passed') else 'FAIL'} {args.command}: {name}")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
