"""Command line front door: ``kgraph {check,solve,convergence,barriers}``.

Exit status 0 means success, 1 a mathematical failure (failed hypothesis,
non-convergence, bound violation) and 2 a usage or configuration error.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .barriers import (build_boundary_barrier, build_height_barrier, certify_boundary_barrier, band_nodes,
                       check_solution_bounds, verify_gradient_dichotomy)
from .conditions import check_cylinder_monotonicity, check_flow_monotonicity, check_ricci_slope, check_serrin
from .config import RunConfig, load_config
from .errors import ConfigError, InputError, KGraphError, ResolutionError
from .io import write_json
from .mesh import DiscreteField, build_domain, write_grid_csv
from .operator import OperatorContext, residual, transformed_residual
from .solver import continuation_solve

log = logging.getLogger("kgraph")

OK, FAILED, USAGE = 0, 1, 2


def _manifest(cfg: RunConfig, command: str, out: Path, extra=None):
    info = {
        "command": command,
        "config": str(cfg.source),
        "config_sha256": hashlib.sha256(cfg.text.encode()).hexdigest(),
        "versions": {"kgraph": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "tolerances": {"newton_tol": cfg.newton_tol, "max_iter": cfg.max_iter, "mu_pad": cfg.mu_pad,
                       "tol_grad": cfg.tol_grad},
        "schedule": cfg.schedule,
        "resolution": cfg.resolution,
    }
    info.update(extra or {})
    write_json(out / "manifest.json", info)


def _domain(cfg: RunConfig, resolution=None):
    return build_domain(cfg.boundary, resolution or cfg.resolution, cfg.chart, pad=cfg.pad)


def run_checks(cfg: RunConfig, domain, out: Path):
    """Hypothesis checks; returns ``(all_passed, reports)``.  Cylinder monotonicity is advisory."""
    height = build_height_barrier(domain, cfg.curvature, cfg.data, cfg.mu_pad)
    reports = [check_flow_monotonicity(domain, cfg.curvature, height.u_sup),
               check_serrin(domain, cfg.curvature, cfg.data),
               check_ricci_slope(domain, cfg.curvature, cfg.data)]
    advisory = check_cylinder_monotonicity(domain)
    for rep in reports + [advisory]:
        rep.write(out / "checks")
    summary = {rep.check: {"pass": rep.passed, "margin": rep.margin} for rep in reports}
    summary["cylinder_monotonicity (advisory)"] = {"pass": advisory.passed, "margin": advisory.margin}
    write_json(out / "checks" / "summary.json", summary)
    for rep in reports + [advisory]:
        log.info("%-22s %s margin=%.6g", rep.check, "pass" if rep.passed else "FAIL", rep.margin)
    return all(rep.passed for rep in reports), reports


def cmd_check(cfg: RunConfig, args) -> int:
    out = args.out
    domain = _domain(cfg)
    passed, _ = run_checks(cfg, domain, out)
    _manifest(cfg, "check", out)
    return OK if passed else FAILED


def _reference(cfg: RunConfig, args):
    if args.reference == "none":
        return None
    exact = cfg.reference.exact(cfg.data)
    if exact is None:
        raise ConfigError("--reference analytic needs a [reference] section with kind cap or data")
    return exact


def _solve(cfg: RunConfig, resolution=None):
    domain = _domain(cfg, resolution)
    ctx = OperatorContext(domain, cfg.curvature)
    u, report = continuation_solve(ctx, cfg.data, cfg.schedule, cfg.newton_tol, cfg.max_iter)
    return ctx, u, report


def _sup_error(u: DiscreteField, exact) -> float:
    return float(np.max(np.abs(u.interior - exact(u.domain.points))))


def _barrier_reports(cfg: RunConfig, ctx, out: Path, u: DiscreteField | None = None):
    """Build and certify both barriers; with a solution also check bounds and the dichotomy."""
    domain = ctx.domain
    height = build_height_barrier(domain, cfg.curvature, cfg.data, cfg.mu_pad)
    barrier = build_boundary_barrier(domain, cfg.curvature, cfg.data, height)
    cert = certify_boundary_barrier(ctx, barrier, cfg.data)
    invariants_ok = barrier.invariants_hold()
    write_json(out / "barriers.json", {
        "height_barrier": height, "u_sup": height.u_sup,
        "boundary_barrier": {"nu": barrier.nu, "log_k": barrier.log_k, "a": barrier.width,
                             "ingredients": barrier.ingredients},
        "invariants": barrier.invariants(), "invariants_hold": invariants_ok,
        "certification": cert.as_dict(),
    })
    nodes = band_nodes(domain, barrier.width)
    upper = lower = np.empty(0)
    if len(nodes):
        upper, _ = transformed_residual(ctx, barrier.profile, cfg.data, nodes)
        lower, _ = transformed_residual(ctx, barrier.profile.scaled(-1.0), cfg.data, nodes)
    with (out / "barrier_band.csv").open("w") as fh:
        fh.write("x1,x2,d,Q_upper,Q_lower\n")
        for k, a, b in zip(nodes, upper, lower):
            x = domain.points[k]
            fh.write(",".join(format(float(v), ".17g") for v in (x[0], x[1], domain.unknown_distance[k], a, b)) + "\n")
    passed = invariants_ok and cert.certified
    if u is not None:
        bounds = check_solution_bounds(u, height, barrier, cfg.data)
        write_json(out / "bounds.json", bounds.as_dict())
        passed = passed and bounds.passed
        if check_flow_monotonicity(domain, cfg.curvature, height.u_sup).passed:
            write_json(out / "dichotomy.json", verify_gradient_dichotomy(ctx, u, tol_grad=cfg.tol_grad).as_dict())
    log.info("barrier nu=%.6g a=%.6g band nodes=%d certified=%s", barrier.nu, barrier.width, cert.nodes,
             cert.certified)
    return passed


def cmd_solve(cfg: RunConfig, args) -> int:
    out = args.out
    exact = _reference(cfg, args)
    domain = _domain(cfg)
    passed, reports = run_checks(cfg, domain, out)
    failed = [r.check for r in reports if not r.passed]
    if failed and not args.force:
        log.error("hypothesis checks failed (%s); rerun with --force to solve anyway", ", ".join(failed))
        _manifest(cfg, "solve", out, {"solved": False})
        return FAILED
    start = time.perf_counter()
    ctx = OperatorContext(domain, cfg.curvature)
    u, report = continuation_solve(ctx, cfg.data, cfg.schedule, cfg.newton_tol, cfg.max_iter)
    wall = time.perf_counter() - start
    report.hypotheses_failed = failed
    status = OK if report.converged else FAILED
    extra = {"u": u.grid()}
    res = np.full(domain.shape, np.nan)
    res[domain.nodes[:, 0], domain.nodes[:, 1]] = residual(ctx, u, weighted=False)
    extra["residual"] = res
    result = report.as_dict()
    if exact is not None:
        err = np.full(domain.shape, np.nan)
        err[domain.nodes[:, 0], domain.nodes[:, 1]] = u.interior - exact(domain.points)
        extra["error"] = err
        result["sup_error"] = _sup_error(u, exact)
    write_grid_csv(domain, out / "solution.csv", extra)
    write_json(out / "solve_report.json", result)
    if report.converged and cfg.barriers:
        try:
            if not _barrier_reports(cfg, ctx, out, u):
                status = FAILED
        except KGraphError as exc:
            log.error("barrier stage: %s", exc)
            status = FAILED
    if failed and report.converged:
        log.warning("converged although %s failed; solution flagged", ", ".join(failed))
    log.info("solve %s at sigma=%g, residual %.3e", "converged" if report.converged else "stalled",
             report.sigma_reached, report.residual_norm)
    _manifest(cfg, "solve", out, {"solved": True, "wall_time_s": wall})
    return status


def _order_column(errors, hs, floor):
    orders = ["" for _ in errors]
    for k in range(1, len(errors)):
        if errors[k] <= floor and errors[k - 1] <= floor:
            orders[k] = "exact"
        elif errors[k] > 0 and errors[k - 1] > 0:
            orders[k] = repr(float(np.log(errors[k - 1] / errors[k]) / np.log(hs[k - 1] / hs[k])))
        else:
            orders[k] = "nan"
    return orders


def cmd_convergence(cfg: RunConfig, args) -> int:
    out = args.out
    resolutions = args.resolutions or cfg.resolutions
    if len(resolutions) < 2:
        raise InputError("a convergence study needs at least two resolutions")
    resolutions = sorted(resolutions)
    exact = _reference(cfg, args)
    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        runs = list(pool.map(lambda n: _solve(cfg, n), resolutions))
    if not all(rep.converged for _, _, rep in runs):
        log.error("a solve in the study did not converge")
        _manifest(cfg, "convergence", out, {"resolutions": resolutions})
        return FAILED
    if exact is None:
        # self-reference: compare coarse nodes with the coincident finest-grid nodes
        fine = runs[-1][1].grid()
        f_shape = fine.shape[0] - 1
        errors = []
        for _, u, _ in runs[:-1]:
            ratio = f_shape // (u.domain.shape[0] - 1)
            if ratio * (u.domain.shape[0] - 1) != f_shape:
                raise ConfigError("self-referenced study needs nested resolutions (N_fine - 1 divisible by N - 1)")
            coarse = u.grid()
            on = u.domain.mask == 1
            errors.append(float(np.nanmax(np.abs(coarse[on] - fine[::ratio, ::ratio][on]))))
        runs = runs[:-1]
        resolutions = resolutions[:-1]
    else:
        errors = [_sup_error(u, exact) for _, u, _ in runs]
    hs = [ctx.domain.h for ctx, _, _ in runs]
    orders = _order_column(errors, hs, 10 * cfg.newton_tol)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "convergence.csv").open("w") as fh:
        fh.write("N,h,sup_error,order\n")
        for n, h, e, o in zip(resolutions, hs, errors, orders):
            fh.write(f"{n},{format(h, '.17g')},{format(e, '.17g')},{o}\n")
    for n, e, o in zip(resolutions, errors, orders):
        log.info("N=%d sup_error=%.6e order=%s", n, e, o or "-")
    _manifest(cfg, "convergence", out, {"resolutions": resolutions})
    return OK


def cmd_barriers(cfg: RunConfig, args) -> int:
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    ctx = OperatorContext(_domain(cfg), cfg.curvature)
    passed = _barrier_reports(cfg, ctx, out)
    _manifest(cfg, "barriers", out)
    return OK if passed else FAILED


COMMANDS = {"check": cmd_check, "solve": cmd_solve, "convergence": cmd_convergence, "barriers": cmd_barriers}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgraph", description="Prescribed mean curvature Killing graphs.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, type=Path, help="INI run configuration")
    parser.add_argument("--out", type=Path, help="output directory (overrides [output] directory)")
    parser.add_argument("--force", action="store_true", help="solve even when hypothesis checks fail")
    parser.add_argument("--reference", choices=("analytic", "none"), default="none",
                        help="compare against the analytic solution from [reference]")
    parser.add_argument("--threads", type=int, default=1, help="parallel solves in a convergence study")
    parser.add_argument("--resolutions", type=lambda s: [int(v) for v in s.split(",") if v.strip()],
                        help="comma separated resolutions for convergence (overrides the config)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    if args.threads < 1:
        log.error("--threads must be at least 1")
        return USAGE
    try:
        cfg = load_config(args.config)
        args.out = args.out or cfg.output
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, InputError, ResolutionError) as exc:
        log.error("%s", exc)
        return USAGE
    except KGraphError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return FAILED


if __name__ == "__main__":
    sys.exit(main())
