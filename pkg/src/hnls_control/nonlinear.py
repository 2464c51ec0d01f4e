"""Picard iteration for the nonlinear control problem.

The map ``Theta`` freezes the nonlinearity at ``v``,

    f0(v) = f - lam |v|^p0 v + i gamma |v|^p1 v_x,
    f1(v) = i (beta + gamma) |v|^p1 v,

and returns the HUM-controlled trajectory of the linear problem with the
sources ``f0 - (f1)_x``.  A fixed point solves the nonlinear problem with
the terminal condition.  The contraction constant is not known in closed
form; :func:`calibrate_constant` estimates it from random small fields and
:func:`radius_from_constant` turns it into the ball radius through
``r^p0 + r^p1 = 1 / (4 C)``.
"""
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .analysis import _random_spacetime, x_norm
from .core import SpaceTimeField, TimeSeries, derivative_matrix, quadrature_weights, trapezoid_weights
from .errors import BallEscape, ConfigError, Divergence, HNLSError, MaxIter
from .forward import midpoint_forcing, source_forcing, stepper
from .hum import DENSE_LIMIT, Gramian, control_linear

GROWTH_LIMIT = 3


@dataclass(frozen=True)
class PicardConfig:
    """Iteration settings.  ``r=None`` means: calibrate the radius."""

    r: float = None
    max_iter: int = 50
    fp_tol: float = 1e-9
    under_relaxation: float = 1.0
    terminal_tol: float = 1e-6
    pde_tol: float = 1e-6
    eps: float = 0.0
    cg_tol: float = 1e-10
    method: str = "auto"
    calibration_samples: int = 16

    def __post_init__(self):
        if self.r is not None and not self.r > 0:
            raise ConfigError(f"ball radius must be positive, got {self.r}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigError(f"max_iter must be a positive integer, got {self.max_iter}")
        for name in ("fp_tol", "terminal_tol", "pde_tol", "cg_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.under_relaxation <= 1:
            raise ConfigError(f"under_relaxation must lie in (0, 1], got {self.under_relaxation}")
        if self.eps < 0:
            raise ConfigError("eps must be >= 0")
        if self.method not in ("auto", "cg", "direct"):
            raise ConfigError(f"method must be auto, cg or direct, got {self.method!r}")


@dataclass(frozen=True)
class ControlSolution:
    h: TimeSeries
    u: SpaceTimeField
    iterations: int
    step_norms: tuple
    contraction_ratios: tuple
    terminal_residual: float
    pde_residual: float
    fixed_point_defect: float = 0.0
    x_norms: tuple = ()
    radius: float = math.inf
    constant: float = 0.0


@dataclass(frozen=True)
class UniquenessReport:
    w_norms: np.ndarray = field(repr=False)
    bound: np.ndarray = field(repr=False)
    max_w: float
    holds: bool


@dataclass(frozen=True)
class ScanRow:
    scale: float
    c0: float
    converged: bool
    iterations: int
    residual: float
    outcome: str


@dataclass(frozen=True)
class SmallnessReport:
    rows: tuple
    delta_hat: float


def _values(v):
    return v.values if isinstance(v, (SpaceTimeField, TimeSeries)) else np.asarray(v)


def nonlinear_terms(v, params, grid):
    """``(N0, N1)`` with ``f0 = f + N0`` and ``f1 = N1`` on all nodes."""
    v = np.asarray(v, dtype=complex)
    n0 = np.zeros_like(v)
    n1 = np.zeros_like(v)
    if params.lam != 0:
        n0 = n0 - params.lam * np.abs(v) ** params.p0 * v
    if params.gamma != 0 or params.beta != 0:
        a1 = np.abs(v) ** params.p1
        if params.gamma != 0:
            vx = (derivative_matrix(grid) @ v.T).T
            n0 = n0 + 1j * params.gamma * a1 * vx
        n1 = 1j * (params.beta + params.gamma) * a1 * v
    return n0, n1


def nonlinear_rhs(v, params, f):
    """Frozen sources ``(f0, f1)`` of ``Theta`` at ``v``."""
    grid = v.grid
    n0, n1 = nonlinear_terms(v.values, params, grid)
    return SpaceTimeField(f.values + n0, grid), SpaceTimeField(n1, grid)


class ThetaMap:
    """``Theta`` for one problem with a cached Gramian."""

    def __init__(self, problem, eps=0.0, method="auto", cg_tol=1e-10, max_iter=None):
        self.problem = problem
        grid = problem.grid
        if method == "auto":
            method = "direct" if grid.Nx <= DENSE_LIMIT else "cg"
        self.method = method
        self.gramian = Gramian(problem.params, grid, eps, dense=(method == "direct"))
        self.cg_tol = cg_tol
        self.max_iter = max_iter

    def with_problem(self, problem):
        """Same Gramian, different data (params and grid must match)."""
        if problem.grid != self.problem.grid or problem.params.linear_part() != self.problem.params.linear_part():
            raise ValueError("problem has a different linear part or grid")
        out = object.__new__(ThetaMap)
        out.__dict__.update(self.__dict__)
        out.problem = problem
        return out

    def sources(self, v):
        p = self.problem
        f0, f1 = nonlinear_rhs(v, p.params, p.f)
        if p.f1 is not None:
            f1 = f1 + p.f1
        return f0, f1

    def __call__(self, v):
        f0, f1 = self.sources(v)
        res = control_linear(self.problem, self.cg_tol, self.max_iter, f0=f0, f1=f1,
                             gramian=self.gramian, check_critical=False, method=self.method)
        return res.trajectory, res.h

    def linear_response(self, f0, f1):
        """Controlled trajectory of the zero-data problem with sources ``f0 - (f1)_x``."""
        from .problem import ControlProblem
        z = ControlProblem.zero(self.problem.params.linear_part(), self.problem.grid)
        res = control_linear(z, self.cg_tol, self.max_iter, f0=f0, f1=f1,
                             gramian=self.gramian, check_critical=False, method=self.method)
        return res.trajectory


def theta_map(v, problem, eps=0.0, method="auto", cg_tol=1e-10):
    """``(u, h) = Theta v``."""
    if not np.all(np.isfinite(v.values)):
        raise ValueError("v must be finite")
    return ThetaMap(problem, eps, method, cg_tol)(v)


def _active_powers(params):
    out = []
    if params.lam != 0:
        out.append(params.p0)
    if params.beta != 0 or params.gamma != 0:
        out.append(params.p1)
    return out


def calibrate_constant(problem, samples=16, scale=1e-2, seed=0, theta=None, eps=0.0, method="auto"):
    """Empirical ``C`` in ``||Theta v1 - Theta v2|| <= C sum_p (||v1||^p + ||v2||^p) ||v1 - v2||``.

    ``v1``, ``v2`` are random smooth fields of X-norm about ``scale``; the
    difference of the images is the zero-data control response to the
    difference of the frozen sources.  Returns ``(C, ratios)`` with ``C``
    the largest observed ratio; ``C = 0`` for the linear equation.
    """
    params, grid = problem.params, problem.grid
    powers = _active_powers(params)
    if not powers:
        return 0.0, np.zeros(0)
    theta = theta or ThetaMap(problem, eps, method)
    rng = np.random.default_rng(seed)
    ratios = np.empty(samples)
    for i in range(samples):
        v1, v2 = (_random_spacetime(rng, grid) for _ in range(2))
        v1 = v1 * (scale / _xn(v1, grid))
        v2 = v1 + (v2 * (0.5 * scale / _xn(v2, grid)))
        a0, a1 = nonlinear_terms(v1, params, grid)
        b0, b1 = nonlinear_terms(v2, params, grid)
        du = theta.linear_response(SpaceTimeField(a0 - b0, grid), SpaceTimeField(a1 - b1, grid))
        n1, n2, nd = _xn(v1, grid), _xn(v2, grid), _xn(v1 - v2, grid)
        den = sum(n1 ** p + n2 ** p for p in powers) * nd
        ratios[i] = x_norm(du) / den
    return float(np.max(ratios)), ratios


def radius_from_constant(C, p0, p1):
    """Largest ``r`` with ``r^p0 + r^p1 <= 1 / (4 C)``."""
    if C <= 0:
        return math.inf
    target = 1.0 / (4.0 * C)

    def g(r):
        return r ** p0 + r ** p1 - target

    hi = 1.0
    while g(hi) < 0:
        hi *= 2.0
    return brentq(g, 0.0, hi, xtol=1e-15, rtol=1e-12)


def _xn(v, grid):
    return x_norm(SpaceTimeField(v, grid))


def pde_residual(u, h, problem):
    """``L2(Q_T)`` norm of the nonlinear Crank-Nicolson residual of ``(u, h)``.

    Each step is checked in equation form,
    ``i [(u^{n+1} - u^n)/dt - A u^{n+1/2} - g^{n+1/2}] - f^{n+1/2}(u)``,
    with the nonlinearity evaluated on ``u`` itself.
    """
    grid, params = problem.grid, problem.params
    st = stepper(params, grid)
    U = u.values
    n0, n1 = nonlinear_terms(U, params, grid)
    f1 = n1 if problem.f1 is None else n1 + problem.f1.values
    src = source_forcing(problem.f.values + n0, f1, grid)
    g = midpoint_forcing(st, problem.mu.values, problem.nu.values, _values(h), None)
    ui = U[:, 1:-1]
    mid = 0.5 * (ui[:-1] + ui[1:])
    au = (st.op.A @ mid.T).T
    r = 1j * ((ui[1:] - ui[:-1]) / grid.dt - au - g) - 0.5 * (src[:-1, 1:-1] + src[1:, 1:-1])
    w = st.op.H
    return float(np.sqrt(grid.dt * np.sum(w * np.abs(r) ** 2)))


def _data_scale(problem):
    c0 = problem.c0
    return c0 if c0 > 0 else 1.0


def _terminal(u, problem):
    w = quadrature_weights(problem.grid)
    diff = np.sqrt(np.sum(w * np.abs(u.values[-1] - problem.uT.values) ** 2))
    return float(diff / _data_scale(problem))


def picard_solve(problem, config=None, v0=None, theta=None):
    """Fixed point of ``Theta`` by (under-relaxed) Picard iteration.

    ``v0`` defaults to the linear-control solution.  Raises
    :class:`BallEscape` when an iterate leaves the ball, :class:`Divergence`
    after three consecutive growing steps and :class:`MaxIter` otherwise;
    each carries the iteration ledger.  Terminal and equation residuals are
    relative to the data size ``c0``.
    """
    config = config or PicardConfig()
    grid = problem.grid
    theta = theta or ThetaMap(problem, config.eps, config.method, config.cg_tol)
    C = 0.0
    r = config.r
    if r is None:
        C, _ = calibrate_constant(problem, config.calibration_samples, theta=theta)
        r = radius_from_constant(C, problem.params.p0, problem.params.p1)
    book = {"step_norms": [], "x_norms": [], "contraction_ratios": [], "radius": r, "constant": C}

    def fail(exc, msg, it):
        book["iterations"] = it
        return exc(msg, ledger=dict(book))

    if v0 is None:
        # the frozen terms vanish at v = 0, so Theta(0) is the linear-control solution
        v, h = theta(SpaceTimeField.zeros(grid))
    else:
        v, h = v0, None
    w = config.under_relaxation
    growth = 0
    for it in range(1, config.max_iter + 1):
        nv = _xn(v.values, grid)
        book["x_norms"].append(nv)
        if not np.isfinite(nv):
            raise fail(Divergence, "iterate is not finite", it - 1)
        if nv > r:
            raise fail(BallEscape, f"||v||_X = {nv:.3e} left the ball of radius {r:.3e}", it - 1)
        u_new, h_new = theta(v)
        if w != 1.0:
            u_new = SpaceTimeField((1 - w) * v.values + w * u_new.values, grid)
            if h is not None:
                h_new = TimeSeries((1 - w) * h.values + w * h_new.values, grid)
        step = _xn(u_new.values - v.values, grid)
        steps = book["step_norms"]
        if steps:
            ratio = step / steps[-1] if steps[-1] > 0 else 0.0
            book["contraction_ratios"].append(ratio)
            growth = growth + 1 if step > steps[-1] else 0
        steps.append(step)
        v, h = u_new, h_new
        if not np.isfinite(step):
            raise fail(Divergence, "step norm is not finite", it)
        if growth >= GROWTH_LIMIT:
            raise fail(Divergence, f"step norms grew {GROWTH_LIMIT} times in a row", it)
        nv = _xn(v.values, grid)
        if nv > r:
            book["x_norms"].append(nv)
            raise fail(BallEscape, f"||v||_X = {nv:.3e} left the ball of radius {r:.3e}", it)
        if step <= config.fp_tol * max(nv, np.finfo(float).tiny):
            book["x_norms"].append(nv)
            break
    else:
        raise fail(MaxIter, f"no fixed point within {config.max_iter} iterations", config.max_iter)
    if h is None:
        _, h = theta(v)
    tu, _ = theta(v)
    defect = _xn(tu.values - v.values, grid)
    scale = _data_scale(problem)
    return ControlSolution(
        h=h, u=v, iterations=it, step_norms=tuple(book["step_norms"]),
        contraction_ratios=tuple(book["contraction_ratios"]),
        terminal_residual=_terminal(v, problem),
        pde_residual=pde_residual(v, h, problem) / scale,
        fixed_point_defect=defect, x_norms=tuple(book["x_norms"]), radius=r, constant=C,
    )


def check_solution(solution, problem, config=None):
    """Certificate of a Picard solution: fixed-point defect, terminal and equation residuals."""
    config = config or PicardConfig()
    nu = x_norm(solution.u)
    return {
        "fixed_point": solution.fixed_point_defect <= 2 * config.fp_tol * max(nu, np.finfo(float).tiny),
        "terminal": solution.terminal_residual <= config.terminal_tol,
        "pde": solution.pde_residual <= config.pde_tol,
        "ball": all(n <= solution.radius for n in solution.x_norms),
    }


def solve_nonlinear_forward(problem, h, u0=None, tol=1e-13, max_iter=100):
    """Trajectory of the nonlinear problem for a given control ``h``.

    Same Crank-Nicolson scheme as the linear solver, with the nonlinearity
    averaged over each step; the implicit half is resolved by fixed-point
    iteration per step.
    """
    grid, params = problem.grid, problem.params
    st = stepper(params, grid)
    u0 = problem.u0 if u0 is None else u0
    mu, nu = problem.mu.values, problem.nu.values
    g = midpoint_forcing(st, mu, nu, _values(h), None)
    f = problem.f.values
    f1x = None if problem.f1 is None else problem.f1.values
    dt = grid.dt
    D = derivative_matrix(grid)

    def src(vfull, n):
        n0, n1 = nonlinear_terms(vfull, params, grid)
        if f1x is not None:
            n1 = n1 + f1x[n]
        out = f[n] + n0
        if np.any(n1):
            out = out - D @ n1
        return out[1:-1]

    U = np.empty((grid.Nt + 1, grid.Nx + 2), dtype=complex)
    U[:, 0] = mu
    U[:, -1] = nu
    U[0, 1:-1] = u0.values[1:-1]
    for n in range(grid.Nt):
        s0 = src(U[n], n)
        base = st.rhs @ U[n, 1:-1] + dt * g[n]
        U[n + 1, 1:-1] = U[n, 1:-1]
        for _ in range(max_iter):
            s1 = src(U[n + 1], n + 1)
            new = st.lu.solve(base - 0.5j * dt * (s0 + s1))
            change = np.max(np.abs(new - U[n + 1, 1:-1]))
            U[n + 1, 1:-1] = new
            if change <= tol * max(1.0, np.max(np.abs(new))):
                break
        else:
            raise HNLSError(f"step {n} of the nonlinear forward solve did not converge")
    return SpaceTimeField(U, grid)


def gronwall_rate(u, v, params, grid):
    """Rate ``omega(t_n)`` of the weighted estimate for the difference of two solutions.

    With ``rho = 1 + x``, ``M = max(|u|_inf, |v|_inf)`` and ``K = |beta + gamma| (p1 + 1) M^p1``,

        omega = max(b, 0) + a^2 + K^2 (1+R)^2 + 2K + 2 gamma^2 M^(2 p1) (1+R)^2
                + (3/4) 2^(-1/3) Cg^(4/3) + 2 |lam| (p0 + 1) M^p0,

    where ``Cg = 2 |gamma| p1 M^(p1 - 1) (1+R) ||v_x||``.  Each term absorbs
    one contribution of the nonlinear differences into the dissipation
    ``3 int |w_x|^2``.
    """
    R = grid.R
    M = np.maximum(np.max(np.abs(u), axis=1), np.max(np.abs(v), axis=1))
    a, b = params.a, params.b
    om = np.full(M.shape, max(b, 0.0) + a * a)
    om = om + 2 * abs(params.lam) * (params.p0 + 1) * M ** params.p0
    if params.beta != 0 or params.gamma != 0:
        p1 = params.p1
        K = abs(params.beta + params.gamma) * (p1 + 1) * M ** p1
        om = om + K ** 2 * (1 + R) ** 2 + 2 * K
        if params.gamma != 0:
            vx = (derivative_matrix(grid) @ v.T).T
            w = quadrature_weights(grid)
            nvx = np.sqrt(np.sum(w * np.abs(vx) ** 2, axis=1))
            Cg = 2 * abs(params.gamma) * p1 * M ** (p1 - 1) * (1 + R) * nvx
            om = om + 2 * params.gamma ** 2 * M ** (2 * p1) * (1 + R) ** 2
            om = om + 0.75 * 2 ** (-1 / 3) * Cg ** (4 / 3)
    return om


def uniqueness_check(problem, solution1, solution2, tol=1e-10):
    """Weighted difference of two solutions with the same control against its bound.

    ``w_norms[n] = ||u1 - u2||_rho(t_n)`` and
    ``bound[n] = exp(int_0^{t_n} omega / 2) ||w(0)||_rho`` (the square root
    of the estimate for ``||w||_rho^2``).  ``holds`` is true when the bound
    dominates at every step up to ``tol`` relative slack.
    """
    grid = problem.grid
    u1 = _values(solution1.u if hasattr(solution1, "u") else solution1)
    u2 = _values(solution2.u if hasattr(solution2, "u") else solution2)
    if u1.shape != (grid.Nt + 1, grid.Nx + 2) or u2.shape != u1.shape:
        raise ValueError("solutions do not live on the problem grid")
    h1 = getattr(solution1, "h", None)
    h2 = getattr(solution2, "h", None)
    if h1 is not None and h2 is not None and not np.allclose(h1.values, h2.values, rtol=1e-12, atol=0):
        raise ValueError("the two solutions use different controls")
    rho = quadrature_weights(grid) * (1.0 + grid.x)
    wn = np.sqrt(np.sum(rho * np.abs(u1 - u2) ** 2, axis=1))
    om = gronwall_rate(u1, u2, problem.params, grid)
    wt = trapezoid_weights(2, grid.dt)
    integral = np.concatenate([[0.0], np.cumsum(wt[0] * (om[:-1] + om[1:]))])
    bound = np.exp(0.5 * integral) * wn[0]
    slack = tol * max(float(np.max(np.abs(u1))), float(np.max(np.abs(u2))), 1e-300)
    holds = bool(np.all(wn <= bound * (1 + tol) + slack))
    return UniquenessReport(wn, bound, float(np.max(wn)), holds)


def smallness_scan(problem, scales, config=None, eps=None):
    """Picard outcome for the template with all data multiplied by each scale.

    The ball radius is calibrated once for the template.  ``delta_hat`` is
    the data size ``c0`` of the largest converging scale.
    """
    scales = [float(s) for s in scales]
    if any(s < 0 for s in scales) or scales != sorted(scales):
        raise ValueError("scales must be non-negative and sorted")
    config = config or PicardConfig()
    theta = ThetaMap(problem, config.eps if eps is None else eps, config.method, config.cg_tol)
    if config.r is None:
        C, _ = calibrate_constant(problem, config.calibration_samples, theta=theta)
        r = radius_from_constant(C, problem.params.p0, problem.params.p1)
        config = replace(config, r=r)
    rows = []
    delta = 0.0
    for s in scales:
        pb = problem.scaled(s)
        th = theta.with_problem(pb)
        try:
            sol = picard_solve(pb, config, theta=th)
            ok = all(check_solution(sol, pb, config).values())
            rows.append(ScanRow(s, pb.c0, ok, sol.iterations, sol.terminal_residual,
                                "converged" if ok else "certificate failed"))
            if ok:
                delta = max(delta, pb.c0)
        except HNLSError as exc:
            rows.append(ScanRow(s, pb.c0, False, exc.ledger.get("iterations", 0), math.nan,
                                type(exc).__name__))
    return SmallnessReport(tuple(rows), delta)
