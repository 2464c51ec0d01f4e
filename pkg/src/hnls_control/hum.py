"""Gramian ``B = S_0T Lambda``, its CG inversion and the linear control.

``B`` acts on interior node values and is Hermitian positive semidefinite
in the quadrature inner product, because ``Lambda`` is the exact adjoint of
``S_0T``.  The linear control is

    h = Lambda B^{-1} (uT - S_T(u0, mu, nu, 0, f0, f1)).

On fine grids the grid modes with vanishing group velocity are almost
uncontrollable and ``B`` has eigenvalues far below machine precision, so
plain CG stagnates for tight tolerances.  The optional Tikhonov shift
``eps`` replaces ``B`` by ``B + eps I``.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np

from .adjoint import _lambda_interior, series_norm
from .core import ComplexField, SpaceTimeField, TimeSeries, l2_norm, trapezoid_weights
from .errors import NonConvergence
from .forward import ForwardInput, solve_forward, stepper

DENSE_LIMIT = 128


@dataclass(frozen=True)
class GramianReport:
    hermitian_defect: float = np.nan
    min_eig: float = np.nan
    max_eig: float = np.nan
    cg_iterations: int = 0
    cg_residual: float = 0.0
    eps: float = 0.0


@dataclass(frozen=True)
class LinearControlResult:
    h: TimeSeries
    trajectory: SpaceTimeField
    terminal_residual: float
    gramian: GramianReport
    phi0: ComplexField = field(repr=False, default=None)
    success: bool = True


class Gramian:
    """Matrix-free ``B`` (plus ``eps I``) for one (params, grid).

    ``window`` optionally restricts the control to time nodes where the
    boolean mask is true; ``B`` is then ``S_0T Pi Lambda`` with ``Pi`` the
    (orthogonal) restriction.
    """

    def __init__(self, params, grid, eps=0.0, window=None, dense=False):
        if eps < 0:
            raise ValueError("eps must be >= 0")
        self.params = params.linear_part()
        self.grid = grid
        self.eps = float(eps)
        self.st = stepper(self.params, grid)
        self.window = None if window is None else np.asarray(window, dtype=bool)
        self.H = self.st.op.H
        self._dense = None
        self._eig = None
        self.applications = 0
        if dense:
            self._dense = self.matrix()

    def lam(self, phi):
        h = _lambda_interior(phi, self.st)
        if self.window is not None:
            mask = self.window.reshape((-1,) + (1,) * (h.ndim - 1))
            h = h * mask
        return h

    def S(self, hvals):
        """Terminal interior state from controls ``hvals`` of shape (Nt+1,) or (Nt+1, k)."""
        st = self.st
        hm = 0.5 * (hvals[:-1] + hvals[1:])
        gh = st.op.gh.reshape((1, -1) + (1,) * (hm.ndim - 1))
        forcing = hm[:, None, ...] * gh
        u0 = np.zeros((self.grid.Nx,) + hvals.shape[1:], dtype=complex)
        return st.propagate(u0, forcing)[-1]

    def apply(self, phi):
        """``(B + eps I) phi`` for interior values ``phi``."""
        self.applications += 1
        if self._dense is not None:
            return self._dense @ phi + self.eps * phi
        return self.S(self.lam(phi)) + self.eps * phi

    def matrix(self):
        """Dense ``B`` (without the shift), one column per interior node."""
        if self._dense is None:
            if self.grid.Nx > DENSE_LIMIT:
                raise ValueError(f"dense Gramian limited to Nx <= {DENSE_LIMIT}")
            eye = np.eye(self.grid.Nx, dtype=complex)
            self._dense = self.S(self.lam(eye))
        return self._dense

    def ip(self, f, g):
        return complex(np.sum(self.H * f * np.conj(g)))

    def spectrum(self):
        """Hermitian defect and eigenvalues of ``B`` in the weighted inner product."""
        B = self.matrix()
        hs = np.sqrt(self.H)
        Bs = hs[:, None] * B / hs[None, :]
        nrm = np.linalg.norm(Bs, 2)
        defect = np.linalg.norm(Bs - Bs.conj().T, 2) / max(nrm, np.finfo(float).tiny)
        ev = np.linalg.eigvalsh(0.5 * (Bs + Bs.conj().T))
        return defect, ev

    def direct(self, target):
        """Tikhonov solution of ``(B + eps I) phi = target`` from the eigendecomposition.

        Negative roundoff eigenvalues are clipped to zero and modes with
        ``lambda + eps == 0`` are dropped, so ``eps = 0`` gives the
        pseudo-inverse.  Unlike CG the result is linear in ``target``.
        Returns ``(phi, relative_residual)``.
        """
        if self._eig is None:
            B = self.matrix()
            hs = np.sqrt(self.H)
            Bs = hs[:, None] * B / hs[None, :]
            lam, V = np.linalg.eigh(0.5 * (Bs + Bs.conj().T))
            self._eig = (lam, V, hs)
        lam, V, hs = self._eig
        den = np.clip(lam, 0.0, None) + self.eps
        inv = np.divide(1.0, den, out=np.zeros_like(den), where=den > 0)
        b = np.asarray(target, dtype=complex)
        hcol = hs.reshape((-1,) + (1,) * (b.ndim - 1))
        icol = inv.reshape(hcol.shape)
        phi = (V @ (icol * (V.conj().T @ (hcol * b)))) / hcol
        nb = np.sqrt(self.ip(b, b).real)
        r = b - self.apply(phi)
        return phi, (np.sqrt(self.ip(r, r).real) / nb if nb > 0 else 0.0)

    def solve(self, target, tol=1e-10, max_iter=None, method="cg"):
        """``(phi, iterations, residual)`` by CG or by the direct eigen-solve."""
        if method == "direct":
            phi, res = self.direct(target)
            return phi, 0, res
        if method != "cg":
            raise ValueError(f"method must be 'cg' or 'direct', got {method!r}")
        return self.cg(target, tol, max_iter)

    def cg(self, target, tol=1e-10, max_iter=None, x0=None):
        """Conjugate gradients on ``(B + eps I) phi = target`` (interior values).

        Stops when ``||r|| <= tol ||target||`` in the weighted norm.  Raises
        :class:`NonConvergence` with the best iterate in ``ledger``.
        """
        if tol <= 0:
            raise ValueError("tol must be positive")
        max_iter = max_iter or 20 * self.grid.Nx
        b = np.asarray(target, dtype=complex)
        nb = np.sqrt(self.ip(b, b).real)
        x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=complex)
        if nb == 0:
            return x, 0, 0.0
        r = b - self.apply(x) if x0 is not None else b.copy()
        p = r.copy()
        rr = self.ip(r, r).real
        best = (np.sqrt(rr) / nb, x.copy())
        for k in range(max_iter + 1):
            res = np.sqrt(rr) / nb
            if res < best[0]:
                best = (res, x.copy())
            if res <= tol:
                return x, k, res
            if k == max_iter:
                break
            Bp = self.apply(p)
            pBp = self.ip(p, Bp).real
            if pBp <= 0:
                break
            alpha = rr / pBp
            x = x + alpha * p
            r = r - alpha * Bp
            rr_new = self.ip(r, r).real
            p = r + (rr_new / rr) * p
            rr = rr_new
        raise NonConvergence(
            f"CG did not reach tol={tol:g} in {max_iter} iterations (best residual {best[0]:.3e})",
            ledger={"phi": best[1], "residual": best[0], "iterations": k},
        )


def apply_B(phi0, params, eps=0.0):
    """``B phi0`` as a field with zero boundary values."""
    g = Gramian(params, phi0.grid, eps)
    out = np.zeros(phi0.grid.Nx + 2, dtype=complex)
    out[1:-1] = g.apply(phi0.values[1:-1])
    return ComplexField(out, phi0.grid)


def solve_B(target, params, tol=1e-10, max_iter=None, eps=0.0, gramian=None):
    """CG solution of ``B phi0 = target``; returns ``(phi0, GramianReport)``."""
    grid = target.grid
    g = gramian or Gramian(params, grid, eps)
    phi, its, res = g.cg(target.values[1:-1], tol, max_iter)
    out = np.zeros(grid.Nx + 2, dtype=complex)
    out[1:-1] = phi
    return ComplexField(out, grid), GramianReport(cg_iterations=its, cg_residual=res, eps=g.eps)


def assemble_gramian_dense(params, grid, eps=0.0):
    """Dense ``B`` with its Hermitian defect and extremal eigenvalues."""
    if grid.Nx > DENSE_LIMIT:
        raise ValueError(f"dense Gramian limited to Nx <= {DENSE_LIMIT}")
    g = Gramian(params, grid, eps)
    defect, ev = g.spectrum()
    return g.matrix(), GramianReport(hermitian_defect=defect, min_eig=float(ev[0]),
                                     max_eig=float(ev[-1]), eps=eps)


def free_terminal(problem, f0=None, f1=None):
    """``S_T(u0, mu, nu, 0, f0, f1)`` as interior values."""
    out = solve_forward(ForwardInput(
        u0=problem.u0, params=problem.params.linear_part(), grid=problem.grid,
        mu=problem.mu, nu=problem.nu,
        f0=problem.f if f0 is None else f0,
        f1=problem.f1 if f1 is None else f1,
    ), ledger=False)
    return out.u.values[-1]


def terminal_residual(uT_reached, uT, grid, floor=1e-300):
    diff = l2_norm(uT_reached - uT, grid)
    return diff / max(l2_norm(uT, grid), floor)


def control_linear(problem, tol=1e-10, max_iter=None, eps=0.0, f0=None, f1=None,
                   gramian=None, terminal_tol=1e-8, check_critical=True, method="cg"):
    """HUM control for the problem with the sources frozen to ``f0``, ``f1``.

    The defect ``d = uT - S_T(u0, mu, nu, 0, f0, f1)`` is inverted by CG,
    ``h = Lambda phi0`` and the problem is re-simulated with ``h``.
    ``method="direct"`` replaces CG by the eigen-solve of the dense Gramian.
    """
    grid = problem.grid
    if check_critical:
        from .analysis import is_critical_length
        v = is_critical_length(grid.R, problem.params.a, problem.params.b, tol=1e-3 * grid.R)
        if v.is_critical:
            warnings.warn(f"R={grid.R} is within {v.distance:.2e} of the critical length "
                          f"for witness {v.witness}", RuntimeWarning, stacklevel=2)
    g = gramian or Gramian(problem.params, grid, eps)
    d = problem.uT.values[1:-1] - free_terminal(problem, f0, f1)[1:-1]
    phi, its, res = g.solve(d, tol, max_iter, method)
    h = g.lam(phi)
    out = solve_forward(ForwardInput(
        u0=problem.u0, params=problem.params.linear_part(), grid=grid,
        mu=problem.mu, nu=problem.nu, h=TimeSeries(h, grid),
        f0=problem.f if f0 is None else f0,
        f1=problem.f1 if f1 is None else f1,
    ), ledger=False)
    reached = out.u.values[-1]
    resid = terminal_residual(reached, problem.uT.values, grid)
    phi_full = np.zeros(grid.Nx + 2, dtype=complex)
    phi_full[1:-1] = phi
    rep = GramianReport(cg_iterations=its, cg_residual=res, eps=g.eps)
    return LinearControlResult(TimeSeries(h, grid), out.u, resid, rep, ComplexField(phi_full, grid),
                               success=bool(resid <= terminal_tol))


def two_controls(problem, tol=1e-10, eps=0.0, max_iter=None, amplitude=0.25, seed=0):
    """Two different controls reaching the same terminal state.

    ``h1`` is the HUM control.  ``h2 = h1 + k`` where ``k`` equals a smooth
    bump ``g`` (norm ``amplitude * ||h1||``) on the first half of the horizon
    and, on the second half, the HUM control that cancels the state ``g``
    produced: ``S_0T k = 0``.  The residual of ``h2`` scales with the bump,
    so a moderate amplitude keeps it at the level of ``h1``.
    Returns ``(h1, h2, residual1, residual2)``.
    """
    grid = problem.grid
    r1 = control_linear(problem, tol, max_iter, eps, check_critical=False)
    t = grid.t
    half = grid.T / 2
    rng = np.random.default_rng(seed)
    phase = np.exp(2j * np.pi * rng.random())
    bump = np.where((t > 0) & (t < half), np.sin(np.pi * t / half) ** 4, 0.0)
    amp = amplitude * max(series_norm(r1.h), np.finfo(float).tiny)
    gvals = amp * phase * bump / series_norm(bump, grid)
    window = t >= half - 1e-12 * grid.T
    gw = Gramian(problem.params, grid, eps, window=window)
    free = gw.S(gvals)
    phi, _, _ = gw.cg(-free, tol, max_iter)
    k = gvals + gw.lam(phi)
    h2 = r1.h.values + k
    out = solve_forward(ForwardInput(
        u0=problem.u0, params=problem.params.linear_part(), grid=grid,
        mu=problem.mu, nu=problem.nu, h=TimeSeries(h2, grid), f0=problem.f, f1=problem.f1,
    ), ledger=False)
    r2 = terminal_residual(out.u.values[-1], problem.uT.values, grid)
    return r1.h, TimeSeries(h2, grid), r1.terminal_residual, r2
