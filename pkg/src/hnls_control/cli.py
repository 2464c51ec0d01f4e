"""Command-line runner.

    hnls-control MODE [--config FILE] [--out DIR] [--seed N] [-v]
    hnls-control verify [SUITE]

Every run writes ``summary.json`` to the output directory; modes that
produce fields also write plain-text dumps.  Exit codes: 0 success,
1 verification failure, 2 configuration error, 3 non-convergence,
4 divergence.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import MODES, SUITES, from_dict, load_config
from .errors import ConfigError, HNLSError, NonConvergence

log = logging.getLogger("hnls_control")

FIELD_HEADER = "# hnls_control field dump v1\n# columns: x t re_u im_u\n"
TRACE_HEADER = "# hnls_control trace dump v1\n# name: {name}\n# columns: t re im\n"
TABLE_HEADER = "# hnls_control table v1\n# name: {name}\n# columns: {columns}\n"
EXIT_OK, EXIT_VERIFY = 0, 1


def _fmt(v):
    return f"{v:.17e}"


def write_field(path, u):
    """Rows ``x t Re u Im u``, time-major, one row per grid node."""
    grid = u.grid
    x, t = grid.x, grid.t
    with open(path, "w") as fh:
        fh.write(FIELD_HEADER)
        for n in range(grid.Nt + 1):
            row = u.values[n]
            for j in range(grid.Nx + 2):
                fh.write(f"{_fmt(x[j])} {_fmt(t[n])} {_fmt(row[j].real)} {_fmt(row[j].imag)}\n")


def write_trace(path, series, name):
    t = series.grid.t
    with open(path, "w") as fh:
        fh.write(TRACE_HEADER.format(name=name))
        for n, v in enumerate(series.values):
            fh.write(f"{_fmt(t[n])} {_fmt(v.real)} {_fmt(v.imag)}\n")


def write_table(path, name, columns, rows):
    with open(path, "w") as fh:
        fh.write(TABLE_HEADER.format(name=name, columns=" ".join(columns)))
        for row in rows:
            fh.write(" ".join(_fmt(float(c)) if not isinstance(c, str) else c for c in row) + "\n")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run_simulate(cfg, out):
    from .forward import ForwardInput, check_energy_identity, solve_forward
    from .nonlinear import solve_nonlinear_forward
    problem = cfg.problem()
    grid, params = problem.grid, problem.params
    h = cfg.control()
    if params.is_linear:
        res = solve_forward(ForwardInput(u0=problem.u0, params=params, grid=grid, mu=problem.mu,
                                         nu=problem.nu, h=h, f0=problem.f))
        u = res.u
        ledger = {w: check_energy_identity(res, w) for w in ("unit", "affine")}
        ledger["theta_l2_squared"] = float(np.sum(res.energy_ledger["theta2"]) * grid.dt)
    else:
        u = solve_nonlinear_forward(problem, h)
        ledger = {}
    from .core import TimeSeries, trace_rows
    theta = TimeSeries(u.values @ trace_rows(grid)[0], grid)
    write_field(out / "field.txt", u)
    write_trace(out / "theta.txt", theta, "theta")
    (out / "ledger.json").write_text(json.dumps(_clean({"energy_imbalance": ledger}), sort_keys=True, indent=2))
    from .analysis import x_norm
    return {"x_norm": x_norm(u), "terminal_l2": _l2(u.values[-1], grid), "energy_imbalance": ledger}, {}


def _l2(v, grid):
    from .core import l2_norm
    return l2_norm(v, grid)


def run_control_linear(cfg, out):
    from .hum import control_linear
    problem = cfg.problem()
    s = cfg.solver
    params = problem.params
    note = {}
    if not params.is_linear:
        note["note"] = "nonlinear coefficients ignored; the linear part is controlled"
        problem = problem.with_params(params.linear_part())
    method = s["method"]
    if method == "auto":
        method = "cg"
    res = control_linear(problem, s["cg_tol"], s["cg_max_iter"], s["eps"],
                         terminal_tol=s["linear_terminal_tol"], method=method)
    write_field(out / "field.txt", res.trajectory)
    write_trace(out / "control.txt", res.h, "h")
    results = {"cg_iterations": res.gramian.cg_iterations, "success": res.success, **note}
    residuals = {"terminal": res.terminal_residual, "cg": res.gramian.cg_residual}
    if not res.success:
        raise NonConvergence(f"terminal residual {res.terminal_residual:.3e} above "
                             f"{s['linear_terminal_tol']:g}", ledger={"results": results, "residuals": residuals})
    return results, residuals


def _picard_config(cfg):
    from .nonlinear import PicardConfig
    s = cfg.solver
    return PicardConfig(r=s["radius"], max_iter=s["picard_max_iter"], fp_tol=s["fp_tol"],
                        under_relaxation=s["under_relaxation"], terminal_tol=s["terminal_tol"],
                        pde_tol=s["pde_tol"], eps=s["eps"], cg_tol=s["cg_tol"], method=s["method"])


def run_control_nonlinear(cfg, out):
    from .nonlinear import check_solution, picard_solve
    problem = cfg.problem()
    config = _picard_config(cfg)
    sol = picard_solve(problem, config)
    checks = check_solution(sol, problem, config)
    write_field(out / "field.txt", sol.u)
    write_trace(out / "control.txt", sol.h, "h")
    results = {
        "converged": all(checks.values()), "checks": checks, "iterations": sol.iterations,
        "step_norms": list(sol.step_norms), "contraction_ratios": list(sol.contraction_ratios),
        "radius": sol.radius, "constant": sol.constant, "c0": problem.c0,
    }
    residuals = {"terminal": sol.terminal_residual, "pde": sol.pde_residual,
                 "fixed_point": sol.fixed_point_defect}
    (out / "ledger.json").write_text(json.dumps(_clean(results), sort_keys=True, indent=2))
    if not results["converged"]:
        raise NonConvergence("Picard iterate failed its certificate",
                             ledger={"results": results, "residuals": residuals})
    return results, residuals


def run_critical_lengths(cfg, out):
    from .analysis import enumerate_critical_lengths
    p = cfg.params()
    R_max = cfg.raw["critical"]["R_max"]
    if not R_max > 0:
        raise ConfigError("critical.R_max must be positive")
    rows = enumerate_critical_lengths(p.a, p.b, R_max)
    write_table(out / "critical_lengths.txt", "critical lengths", ("R", "k", "l"),
                [(f"{R:.5f}", str(k), str(l)) for R, k, l in rows])
    for R, k, l in rows:
        print(f"{R:.5f} {k} {l}")
    return {"lengths": [{"R": R, "k": k, "l": l} for R, k, l in rows], "R_max": R_max}, {}


def run_scan(cfg, out):
    from . import analysis
    sc = cfg.raw["scan"]
    kind, samples, seed = sc["kind"], sc["samples"], cfg.seed
    grid = cfg.grid()
    if samples < 1:
        raise ConfigError("scan.samples must be >= 1")
    if kind == "interpolation":
        rep = analysis.interpolation_ratio_scan(grid, samples, seed)
        results = {"max_ratio": rep.max_ratio, "argmax": rep.argmax}
    elif kind in ("L7", "L8", "L9"):
        try:
            rep = analysis.nonlinear_estimate_scan(kind, sc["p"], grid, samples, seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        results = {"max_ratio": rep.max_ratio, "argmax": rep.argmax, "p": sc["p"]}
    elif kind == "observability":
        from .adjoint import observability_scan
        rep = observability_scan(cfg.params(), grid, samples, sc["cutoff"], seed)
        results = {"ratio": rep.ratio, "infinite": rep.infinite, "subspace_dim": rep.subspace_dim,
                   "cutoff": rep.cutoff}
    else:
        from .nonlinear import smallness_scan
        try:
            rep = smallness_scan(cfg.problem(), sc["scales"], _picard_config(cfg))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        rows = [(r.scale, r.c0, str(r.converged).lower(), str(r.iterations), r.residual, r.outcome)
                for r in rep.rows]
        write_table(out / "scan.txt", "smallness", ("scale", "c0", "converged", "iterations",
                                                    "terminal_residual", "outcome"), rows)
        results = {"delta_hat": rep.delta_hat, "rows": [r.__dict__ for r in rep.rows]}
    results["kind"] = kind
    results["samples"] = samples
    return results, {}


def run_verify(cfg, out):
    from .verification import run_suite
    rows = run_suite(cfg.raw["verify"]["suite"], cfg.seed)
    for r in rows:
        print(r.line())
    table = [{"suite": r.suite, "name": r.name, "passed": r.passed, "threshold": r.threshold,
              # wall-clock values would break byte-identical summaries
              "value": None if "runtime" in r.name else r.value, "detail": r.detail}
             for r in rows]
    results = {"suite": cfg.raw["verify"]["suite"], "rows": table,
               "passed": all(r.passed for r in rows)}
    return results, {}


RUNNERS = {
    "simulate": run_simulate,
    "control-linear": run_control_linear,
    "control-nonlinear": run_control_nonlinear,
    "critical-lengths": run_critical_lengths,
    "scan": run_scan,
    "verify": run_verify,
}


def _summary(cfg, status, exit_code, results=None, residuals=None, message=""):
    grid = cfg.raw["grid"] if cfg is not None else None
    return _clean({
        "config_hash": cfg.hash() if cfg is not None else None,
        "mode": cfg.mode if cfg is not None else None,
        "seed": cfg.seed if cfg is not None else None,
        "grid": grid,
        "tolerances": cfg.solver if cfg is not None else None,
        "status": status,
        "exit_code": exit_code,
        "message": message,
        "results": results or {},
        "residuals": residuals or {},
    })


def build_parser():
    parser = argparse.ArgumentParser(prog="hnls-control", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        sp = sub.add_parser(mode)
        sp.add_argument("--config", "-c", help="YAML scenario file")
        sp.add_argument("--out", "-o", default="hnls_out", help="output directory (default: hnls_out)")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--verbose", "-v", action="count", default=0)
        if mode == "verify":
            sp.add_argument("suite", nargs="?", help="one of: " + ", ".join(SUITES))
    return parser


def run(cfg, out_dir):
    """Run one configuration; returns ``(exit_code, summary)`` and writes ``summary.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        results, residuals = RUNNERS[cfg.mode](cfg, out)
        code = EXIT_OK
        if cfg.mode == "verify" and not results["passed"]:
            code = EXIT_VERIFY
        summary = _summary(cfg, "ok" if code == EXIT_OK else "verification failed", code, results, residuals)
    except HNLSError as exc:
        ledger = exc.ledger if isinstance(exc.ledger, dict) else {}
        summary = _summary(cfg, type(exc).__name__, exc.exit_code,
                           ledger.get("results", _ledger_summary(ledger)), ledger.get("residuals"), str(exc))
        log.error("%s: %s", type(exc).__name__, exc)
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return summary["exit_code"], summary


def _ledger_summary(ledger):
    keep = {}
    for k, v in ledger.items():
        if isinstance(v, (int, float, str, bool)) or (isinstance(v, list) and len(v) < 1000):
            keep[k] = v
    return keep


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    out = Path(args.out)
    try:
        cfg = load_config(args.config) if args.config else from_dict({"mode": args.mode})
        if cfg.declared_mode is not None and cfg.declared_mode != args.mode:
            raise ConfigError(f"configuration mode {cfg.mode!r} differs from the command {args.mode!r}")
        cfg = cfg.with_overrides(mode=args.mode, seed=args.seed, suite=getattr(args, "suite", None))
    except ConfigError as exc:
        out.mkdir(parents=True, exist_ok=True)
        summary = _summary(None, "ConfigError", exc.exit_code, message=str(exc))
        (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
        print(f"config error: {exc}", file=sys.stderr)
        return exc.exit_code
    log.info("mode %s, config hash %s", cfg.mode, cfg.hash())
    code, summary = run(cfg, out)
    if code not in (EXIT_OK, EXIT_VERIFY):
        print(f"{summary['status']}: {summary['message']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
