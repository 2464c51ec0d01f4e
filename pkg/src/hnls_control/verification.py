"""Built-in verification suites behind ``verify``.

Every check returns a :class:`CheckResult`; failures are rows, not
exceptions.  The fixtures are the standard scenarios of
:mod:`hnls_control.scenarios`.
"""
import math
import time
from dataclasses import dataclass

import numpy as np

from .core import ComplexField, EquationParams, GridSpec, TimeSeries
from .errors import BallEscape, ConfigError, Divergence, HNLSError

SUITE_NAMES = ("duality", "energy", "gramian", "criticality", "picard")


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} [{self.suite}] {self.name}: {self.value:.6g} (threshold {self.threshold:.6g}) {self.detail}".rstrip()


def _random_field(rng, grid):
    v = rng.standard_normal(grid.Nx + 2) + 1j * rng.standard_normal(grid.Nx + 2)
    return ComplexField(v, grid)


def duality_suite(pairs=20, Nx=64, Nt=128, seed=0):
    from .adjoint import check_duality
    grid = GridSpec(3.0, 1.0, Nx, Nt)
    params = EquationParams(a=0.0, b=1.0)
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(pairs):
        h = TimeSeries(rng.standard_normal(Nt + 1) + 1j * rng.standard_normal(Nt + 1), grid)
        worst = max(worst, check_duality(h, _random_field(rng, grid), params))
    elapsed = time.perf_counter() - t0
    return [
        CheckResult("duality", "max relative duality residual", worst, 1e-12, worst <= 1e-12,
                    f"{pairs} pairs at ({Nx},{Nt})"),
        CheckResult("duality", "runtime seconds", elapsed, 10.0, elapsed < 10.0),
    ]


def energy_errors(Nx, Nt):
    from .forward import check_energy_identity, solve_forward
    from .scenarios import energy_input
    out = solve_forward(energy_input(Nx, Nt))
    return {w: check_energy_identity(out, w) for w in ("unit", "affine")}


def energy_suite(Nx=31, Nt=64):
    coarse = energy_errors(Nx, Nt)
    fine = energy_errors(2 * (Nx + 1) - 1, 2 * Nt)
    rows = []
    for w in ("unit", "affine"):
        ratio = coarse[w] / fine[w] if fine[w] > 0 else math.inf
        rows.append(CheckResult("energy", f"imbalance ratio under halving, weight {w}", ratio, 1.5,
                                ratio >= 1.5, f"{coarse[w]:.3e} -> {fine[w]:.3e}"))
    return rows


def gramian_suite(Nx=16, Nt=64, T=0.5):
    from .hum import assemble_gramian_dense
    params = EquationParams(a=0.0, b=1.0)
    _, good = assemble_gramian_dense(params, GridSpec(3.0, T, Nx, Nt))
    _, crit = assemble_gramian_dense(params, GridSpec(2 * math.pi, T, Nx, Nt))
    ratio = crit.min_eig / good.min_eig if good.min_eig > 0 else math.inf
    return [
        CheckResult("gramian", "Hermitian defect at R=3", good.hermitian_defect, 1e-12,
                    good.hermitian_defect <= 1e-12),
        CheckResult("gramian", "min eigenvalue at R=3", good.min_eig, 0.0, good.min_eig > 0),
        CheckResult("gramian", "min eigenvalue ratio R=2pi / R=3", ratio, 1e-3, ratio <= 1e-3),
    ]


def loeschian_lengths(a, b, R_max, n=60):
    """All ``2 pi sqrt(q / (3b + a^2))`` up to ``R_max`` by exhaustive double loop."""
    rad = 3 * b + a * a
    out = set()
    for k in range(1, n + 1):
        for l in range(1, n + 1):
            R = 2 * math.pi * math.sqrt((k * k + k * l + l * l) / rad)
            if R <= R_max:
                out.add(round(R, 12))
    return sorted(out)


def criticality_suite(samples=1000, seed=0, tol=0.05):
    from .analysis import enumerate_critical_lengths, is_critical_length
    found = [(round(R, 5), k, l) for R, k, l in enumerate_critical_lengths(0.0, 1.0, 10.0)]
    expected = [(round(2 * math.pi, 5), 1, 1), (round(2 * math.pi * math.sqrt(7 / 3), 5), 1, 2)]
    rng = np.random.default_rng(seed)
    lengths = np.array(loeschian_lengths(0.0, 1.0, 12.0))
    # the reference list reaches past R_max so that R near 10 sees its nearest neighbour
    hits = lengths[lengths <= 10.0]
    # uniform on (0, 10], plus every critical length in range as an exact hit
    Rs = np.concatenate([10.0 - rng.uniform(0.0, 10.0, samples - len(hits)), hits])
    agree = 0
    for R in Rs:
        brute = bool(np.min(np.abs(lengths - R)) <= tol)
        agree += is_critical_length(float(R), 0.0, 1.0, tol).is_critical == brute
    return [
        CheckResult("criticality", "enumeration a=0 b=1 R_max=10 matches", float(found == expected), 1.0,
                    found == expected, str(found)),
        CheckResult("criticality", "classifier agrees with brute force", agree / len(Rs), 1.0,
                    agree == len(Rs), f"{agree}/{len(Rs)}"),
    ]


def picard_suite(c0=1e-3, blowup=1e5):
    from .analysis import x_norm
    from .nonlinear import PicardConfig, ThetaMap, picard_solve
    from .scenarios import cubic_problem
    problem = cubic_problem(c0)
    config = PicardConfig()
    theta = ThetaMap(problem, config.eps, config.method, config.cg_tol)
    rows = []
    try:
        sol = picard_solve(problem, config, theta=theta)
    except HNLSError as exc:
        return [CheckResult("picard", "small-data convergence", 0.0, 1.0, False, f"{type(exc).__name__}: {exc}")]
    ratios = sol.contraction_ratios
    worst = max(ratios) if ratios else 0.0
    nu = x_norm(sol.u)
    rows.append(CheckResult("picard", "largest contraction ratio", worst, 1.0, worst < 1.0,
                            f"{sol.iterations} iterations"))
    rows.append(CheckResult("picard", "fixed-point defect / (fp_tol ||u||_X)",
                            sol.fixed_point_defect / (config.fp_tol * nu), 2.0,
                            sol.fixed_point_defect <= 2 * config.fp_tol * nu))
    rows.append(CheckResult("picard", "terminal residual", sol.terminal_residual, config.terminal_tol,
                            sol.terminal_residual <= config.terminal_tol))
    rows.append(CheckResult("picard", "equation residual / c0", sol.pde_residual, config.pde_tol,
                            sol.pde_residual <= config.pde_tol))
    big = problem.scaled(blowup)
    try:
        picard_solve(big, PicardConfig(r=sol.radius), theta=theta.with_problem(big))
        outcome, ok = "converged", False
    except (Divergence, BallEscape) as exc:
        outcome, ok = type(exc).__name__, True
    except HNLSError as exc:
        outcome, ok = type(exc).__name__, False
    rows.append(CheckResult("picard", f"data x{blowup:g} reports Divergence or BallEscape", float(ok), 1.0, ok,
                            outcome))
    return rows


SUITES = {
    "duality": duality_suite,
    "energy": energy_suite,
    "gramian": gramian_suite,
    "criticality": criticality_suite,
    "picard": picard_suite,
}


def run_suite(name, seed=0):
    """Rows of one suite, or of all of them for ``name="all"``."""
    if name == "all":
        names = SUITE_NAMES
    elif name in SUITES:
        names = (name,)
    else:
        raise ConfigError(f"unknown verify suite {name!r}; known suites: all, {', '.join(SUITE_NAMES)}")
    rows = []
    for n in names:
        fn = SUITES[n]
        rows.extend(fn(seed=seed) if n in ("duality", "criticality") else fn())
    return rows
