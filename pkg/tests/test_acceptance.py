"""Acceptance criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines, or as a
script: ``python -m tests.test_acceptance``.
"""
import math
import time

import numpy as np
import pytest

from hnls_control.adjoint import observability_scan
from hnls_control.analysis import (enumerate_critical_lengths, interpolation_ratio_scan, is_critical_length,
                                   nonlinear_estimate_scan, x_norm)
from hnls_control.core import ComplexField, EquationParams, GridSpec, SpaceTimeField, l2_norm
from hnls_control.errors import BallEscape, Divergence, HNLSError
from hnls_control.forward import ForwardInput, solve_forward
from hnls_control.hum import control_linear, two_controls
from hnls_control.nonlinear import (PicardConfig, ThetaMap, picard_solve, solve_nonlinear_forward,
                                    uniqueness_check)
from hnls_control.scenarios import cubic_problem, linear_control_problem
from hnls_control.verification import duality_suite, energy_suite, gramian_suite, loeschian_lengths

KDV = EquationParams(a=0.0, b=1.0)


def report(number, title, checks):
    """Print one line per criterion; ``checks`` maps a label to ``(passed, measured)``."""
    ok = all(passed for passed, _ in checks.values())
    detail = "; ".join(f"{k}={v}" for k, (_, v) in checks.items())
    print(f"{'PASS' if ok else 'FAIL'} criterion {number:2d} ({title}): {detail}")
    return ok


def criterion_1():
    rows = duality_suite(pairs=20, Nx=64, Nt=128, seed=1)
    res, rt = rows
    return report(1, "duality", {"residual": (res.passed, f"{res.value:.2e}"),
                                 "runtime_s": (rt.passed, f"{rt.value:.2f}")})


def criterion_2():
    g = GridSpec(3.0, 1.0, 64, 128)
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = -math.inf
    for _ in range(10):
        v = rng.standard_normal(g.Nx + 2) + 1j * rng.standard_normal(g.Nx + 2)
        v[0] = v[-1] = 0
        out = solve_forward(ForwardInput(ComplexField(v, g), KDV, g), ledger=False)
        n = np.array([l2_norm(w, g) for w in out.u.values])
        worst = max(worst, float(np.max(np.diff(n)) / n[0]))
    elapsed = time.perf_counter() - t0
    return report(2, "contraction", {"max_step_increase/||u0||": (worst <= 1e-8, f"{worst:.2e}"),
                                     "runtime_s": (elapsed < 5.0, f"{elapsed:.2f}")})


def criterion_3():
    rows = energy_suite()
    return report(3, "energy identity", {r.name.split()[-1]: (r.passed, f"{r.value:.2f}") for r in rows})


def criterion_4():
    defect, min_eig, ratio = gramian_suite(Nx=16)
    return report(4, "gramian", {"defect": (defect.passed, f"{defect.value:.1e}"),
                                 "min_eig_R3": (min_eig.passed, f"{min_eig.value:.2e}"),
                                 "ratio_2pi/3": (ratio.passed, f"{ratio.value:.1e}")})


def criterion_5():
    prob = linear_control_problem(Nx=64, Nt=256)
    t0 = time.perf_counter()
    res = control_linear(prob, tol=1e-10, eps=1e-12)
    elapsed = time.perf_counter() - t0
    return report(5, "linear control", {
        "terminal_residual": (res.terminal_residual <= 1e-8, f"{res.terminal_residual:.2e}"),
        "cg_iterations": (True, res.gramian.cg_iterations),
        "runtime_s": (elapsed < 60.0, f"{elapsed:.1f}")})


def criterion_6():
    found = [(round(R, 6), k, l) for R, k, l in enumerate_critical_lengths(0.0, 1.0, 10.0)]
    expected = [(round(2 * math.pi, 6), 1, 1), (round(2 * math.pi * math.sqrt(7 / 3), 6), 1, 2)]
    rng = np.random.default_rng(6)
    R_max, tol = 10.0, 0.05
    lengths = np.array(loeschian_lengths(0.0, 1.0, R_max + 1.0))
    Rs = R_max - rng.uniform(0.0, R_max, 1000)
    agree = sum(is_critical_length(float(R), 0.0, 1.0, tol).is_critical
                == bool(np.min(np.abs(lengths - R)) <= tol) for R in Rs)
    return report(6, "critical lengths", {"enumeration": (found == expected, found),
                                          "brute_force_agreement": (agree == 1000, f"{agree}/1000")})


@pytest.fixture(scope="module")
def cubic_run():
    problem = cubic_problem(1e-3)
    config = PicardConfig()
    theta = ThetaMap(problem, config.eps, config.method, config.cg_tol)
    return problem, config, theta, picard_solve(problem, config, theta=theta)


def criterion_7(problem, config, theta, sol):
    nu = x_norm(sol.u)
    big = problem.scaled(1e5)
    try:
        picard_solve(big, PicardConfig(r=sol.radius), theta=theta.with_problem(big))
        outcome, graceful = "converged", False
    except (Divergence, BallEscape) as exc:
        outcome, graceful = type(exc).__name__, True
    except HNLSError as exc:
        outcome, graceful = type(exc).__name__, False
    ratios = sol.contraction_ratios
    return report(7, "Picard fixed point", {
        "max_ratio": (all(r < 1 for r in ratios), f"{max(ratios, default=0):.1e}"),
        "certificate": (sol.fixed_point_defect <= 2 * config.fp_tol * nu,
                        f"{sol.fixed_point_defect / nu:.1e}*||u||"),
        "terminal": (sol.terminal_residual <= 1e-6, f"{sol.terminal_residual:.1e}"),
        "pde": (sol.pde_residual <= 1e-6, f"{sol.pde_residual:.1e}"),
        "x1e5": (graceful, outcome)})


def criterion_8(problem, config, theta, sol):
    g = problem.grid
    rng = np.random.default_rng(8)
    v = rng.standard_normal((g.Nt + 1, g.Nx + 2)) + 1j * rng.standard_normal((g.Nt + 1, g.Nx + 2))
    v0 = SpaceTimeField(v * (0.5 * sol.radius / x_norm(SpaceTimeField(v, g))), g)
    other = picard_solve(problem, PicardConfig(r=sol.radius), v0=v0, theta=theta)
    diff = x_norm(SpaceTimeField(other.u.values - sol.u.values, g)) / x_norm(sol.u)
    s = np.sin(np.pi * g.x / g.R) ** 2
    holds = True
    for amp in (1e-5, 1e-4, 1e-3):
        u1 = solve_nonlinear_forward(problem, sol.h)
        u2 = solve_nonlinear_forward(problem, sol.h, u0=problem.u0 + ComplexField(amp * (1 - 1j) * s, g))
        holds &= uniqueness_check(problem, u1, u2).holds
    return report(8, "uniqueness", {"relative_gap": (diff <= 10 * config.fp_tol, f"{diff:.1e}"),
                                    "gronwall_stepwise": (holds, holds)})


def criterion_9():
    c = {}
    for R in (3.0, 2 * math.pi):
        c[R] = [observability_scan(KDV, GridSpec(R, 1.0, nx, nt), samples=64).ratio
                for nx, nt in ((32, 64), (64, 128))]
    drift = abs(c[3.0][1] - c[3.0][0]) / c[3.0][0]
    growth = c[2 * math.pi][1] / c[2 * math.pi][0]
    return report(9, "observability", {"drift_R3": (drift < 0.2, f"{drift:.3f}"),
                                       "growth_R2pi": (growth >= 10, f"{growth:.1f}")})


def criterion_10():
    coarse, fine = GridSpec(3.0, 1.0, 64, 64), GridSpec(3.0, 1.0, 128, 128)
    checks = {}
    for vanish in (False, True):
        a = interpolation_ratio_scan(coarse, 1000, seed=10, vanish=vanish).max_ratio
        b = interpolation_ratio_scan(fine, 1000, seed=10, vanish=vanish).max_ratio
        d = abs(b - a) / max(a, b)
        checks["interp" + ("_H10" if vanish else "")] = (d < 0.2, f"{d:.3f}")
    for kind, p in (("L7", 2.0), ("L8", 1.5), ("L9", 1.5)):
        a = nonlinear_estimate_scan(kind, p, coarse, 1000, seed=10).max_ratio
        b = nonlinear_estimate_scan(kind, p, fine, 1000, seed=10).max_ratio
        d = abs(b - a) / max(a, b)
        checks[kind] = (d < 0.2, f"{d:.3f}")
    return report(10, "inequality scans", checks)


def criterion_11():
    prob = linear_control_problem(Nx=64, Nt=256)
    h1, h2, r1, r2 = two_controls(prob, tol=1e-10, eps=1e-12)
    from hnls_control.adjoint import series_norm
    gap = series_norm(h1 - h2) / max(series_norm(h1), series_norm(h2))
    return report(11, "two controls", {"residual_h1": (r1 <= 1e-8, f"{r1:.1e}"),
                                       "residual_h2": (r2 <= 1e-8, f"{r2:.1e}"),
                                       "relative_gap": (gap >= 0.1, f"{gap:.2f}")})


def test_criterion_01_duality():
    assert criterion_1()


def test_criterion_02_contraction():
    assert criterion_2()


def test_criterion_03_energy():
    assert criterion_3()


def test_criterion_04_gramian():
    assert criterion_4()


def test_criterion_05_linear_control():
    assert criterion_5()


def test_criterion_06_critical_lengths():
    assert criterion_6()


def test_criterion_07_picard(cubic_run):
    assert criterion_7(*cubic_run)


def test_criterion_08_uniqueness(cubic_run):
    assert criterion_8(*cubic_run)


def test_criterion_09_observability():
    assert criterion_9()


def test_criterion_10_inequality_scans():
    assert criterion_10()


def test_criterion_11_two_controls():
    assert criterion_11()


if __name__ == "__main__":
    problem = cubic_problem(1e-3)
    config = PicardConfig()
    theta = ThetaMap(problem, config.eps, config.method, config.cg_tol)
    run = (problem, config, theta, picard_solve(problem, config, theta=theta))
    results = [criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_5(), criterion_6(),
               criterion_7(*run), criterion_8(*run), criterion_9(), criterion_10(), criterion_11()]
    print(f"{sum(results)}/{len(results)} criteria passed")
