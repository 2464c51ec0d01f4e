"""Crank-Nicolson solution of the linear non-homogeneous problem.

    i u_t + a u_xx + i b u_x + i u_xxx = f0 - (f1)_x,
    u(t,0) = mu, u(t,R) = nu, u_x(t,R) = h, u(0,x) = u0.

Written as ``u' = A u + gmu mu + gnu nu + gh h - i f`` on the interior
nodes, every step solves one banded system with a cached sparse LU.
Boundary data and sources enter through their averages over the step, so
the map from (u0, mu, nu, h, f0, f1) to the trajectory is linear and its
discrete adjoint is available exactly (see :mod:`hnls_control.adjoint`).
"""
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from .core import (ComplexField, SpaceTimeField, TimeSeries, build_operator,
                   derivative_matrix, quadrature_weights, trapezoid_weights)

COMPAT_TOL = 1e-8


class Stepper:
    """Cached Crank-Nicolson factorisation for one (params, grid) pair."""

    def __init__(self, params, grid):
        self.params = params
        self.grid = grid
        self.op = build_operator(params, grid, "forward")
        dt = grid.dt
        eye = sp.identity(grid.Nx, format="csc", dtype=complex)
        A = self.op.A.tocsc()
        self.lu = spl.splu((eye - 0.5 * dt * A).tocsc())
        self.rhs = (eye + 0.5 * dt * A).tocsr()
        self.rhs_h = self.rhs.conj().T.tocsr()

    def propagate(self, u0, forcing=None):
        """Interior trajectory from ``u0`` with midpoint forcing ``forcing[n]``.

        ``u0`` has shape ``(Nx,)`` or ``(Nx, k)``; ``forcing`` matches with a
        leading time axis of length ``Nt`` (or is ``None``).
        """
        dt, nt = self.grid.dt, self.grid.Nt
        out = np.empty((nt + 1,) + np.shape(u0), dtype=complex)
        out[0] = u0
        for n in range(nt):
            b = self.rhs @ out[n]
            if forcing is not None:
                b = b + dt * forcing[n]
            out[n + 1] = self.lu.solve(b)
        return out

    def control_columns(self, hvals):
        """Midpoint forcing produced by a control series alone."""
        hm = 0.5 * (hvals[:-1] + hvals[1:])
        return hm[:, None] * self.op.gh[None, :]

    def adjoint_sweep(self, psi_T):
        """Backward sweep of the H-adjoint of the step map.

        Returns ``chi`` of shape ``(Nt, Nx, ...)`` with
        ``chi[n] = (I - dt/2 A)^{-*} psi_{n+1}`` and ``psi_n`` the adjoint
        state at ``t_n``; the control adjoint is read off ``chi``.
        """
        h = self.op.H
        hcol = h.reshape((-1,) + (1,) * (np.ndim(psi_T) - 1))
        nt = self.grid.Nt
        chi = np.empty((nt,) + np.shape(psi_T), dtype=complex)
        psi = np.array(psi_T, dtype=complex)
        for n in range(nt - 1, -1, -1):
            # chi = H^-1 L^-H H psi ; psi_prev = H^-1 Rm^H H chi
            c = self.lu.solve(hcol * psi, trans="H") / hcol
            chi[n] = c
            psi = (self.rhs_h @ (hcol * c)) / hcol
        return chi


@lru_cache(maxsize=32)
def stepper(params, grid):
    return Stepper(params.linear_part(), grid)


def _series(ts, grid):
    if ts is None:
        return np.zeros(grid.Nt + 1, dtype=complex)
    return np.asarray(ts.values if isinstance(ts, TimeSeries) else ts, dtype=complex)


def _stfield(f, grid):
    if f is None:
        return np.zeros((grid.Nt + 1, grid.Nx + 2), dtype=complex)
    return np.asarray(f.values if isinstance(f, SpaceTimeField) else f, dtype=complex)


@dataclass(frozen=True)
class ForwardInput:
    u0: ComplexField
    params: object
    grid: object
    mu: TimeSeries = None
    nu: TimeSeries = None
    h: TimeSeries = None
    f0: SpaceTimeField = None
    f1: SpaceTimeField = None


@dataclass(frozen=True)
class ForwardOutput:
    u: SpaceTimeField
    theta: TimeSeries
    energy_ledger: dict = field(repr=False)
    input: ForwardInput = field(repr=False)


def source_forcing(f0, f1, grid):
    """Full-grid source ``f = f0 - D f1`` for every time level."""
    f = np.array(f0, dtype=complex)
    if f1 is not None and np.any(f1):
        f = f - (derivative_matrix(grid) @ f1.T).T
    return f


def midpoint_forcing(st, mu, nu, h, f):
    """Forcing ``g_{n+1/2}`` of each CN step from boundary data and source."""
    op = st.op

    def avg(v):
        return 0.5 * (v[:-1] + v[1:])

    g = (avg(mu)[:, None] * op.gmu[None, :] + avg(nu)[:, None] * op.gnu[None, :]
         + avg(h)[:, None] * op.gh[None, :])
    if f is not None:
        g = g - 1j * avg(f[:, 1:-1])
    return g


def solve_forward(inp, ledger=True):
    """Trajectory, x=0 trace and energy ledger of the linear problem."""
    grid, params = inp.grid, inp.params
    st = stepper(params, grid)
    mu, nu, h = (_series(s, grid) for s in (inp.mu, inp.nu, inp.h))
    f0 = _stfield(inp.f0, grid)
    f1 = _stfield(inp.f1, grid)
    u0 = inp.u0.values
    scale = max(1.0, float(np.max(np.abs(u0))))
    if abs(u0[0] - mu[0]) > COMPAT_TOL * scale or abs(u0[-1] - nu[0]) > COMPAT_TOL * scale:
        warnings.warn("u0 boundary values differ from mu(0), nu(0); the boundary columns follow the data",
                      RuntimeWarning, stacklevel=2)
    f = source_forcing(f0, f1, grid)
    has_src = np.any(f)
    forcing = midpoint_forcing(st, mu, nu, h, f if has_src else None)
    U = st.propagate(u0[1:-1], forcing)
    full = np.empty((grid.Nt + 1, grid.Nx + 2), dtype=complex)
    full[:, 0] = mu
    full[:, -1] = nu
    full[:, 1:-1] = U
    theta = full @ st.op.d0
    book = energy_ledger(full, theta, params, grid, f0, f1) if ledger else {}
    return ForwardOutput(SpaceTimeField(full, grid), TimeSeries(theta, grid), book, inp)


def terminal_slice(output):
    return output.u.snapshot(output.u.grid.Nt)


def energy_ledger(u, theta, params, grid, f0, f1):
    """Per-time-level integrands of the weighted energy identity.

    For each weight ``rho`` (unit: 1, affine: 1+x) the ledger stores the
    mass ``int |u|^2 rho`` and the integrands of every time integral:
    ``|theta|^2``, ``int |u_x|^2 rho'``, ``int |u|^2 rho'``,
    ``Im int u_x conj(u) rho'``, ``Im int f0 conj(u) rho`` and
    ``Im int f1 (conj(u) rho)_x``.
    """
    w = quadrature_weights(grid)
    D = derivative_matrix(grid)
    ux = (D @ u.T).T
    out = {"theta2": np.abs(theta) ** 2}
    for name, rho, drho in (("unit", np.ones_like(grid.x), np.zeros_like(grid.x)),
                            ("affine", 1.0 + grid.x, np.ones_like(grid.x))):
        urho_x = (D @ (np.conj(u) * rho).T).T
        out[name] = {
            "mass": np.sum(w * rho * np.abs(u) ** 2, axis=1),
            "dissipation": np.sum(w * drho * np.abs(ux) ** 2, axis=1),
            "b_term": np.sum(w * drho * np.abs(u) ** 2, axis=1),
            "a_term": np.imag(np.sum(w * drho * ux * np.conj(u), axis=1)),
            "f0_term": np.imag(np.sum(w * rho * f0 * np.conj(u), axis=1)),
            "f1_term": np.imag(np.sum(w * f1 * urho_x, axis=1)),
        }
    return out


def energy_residuals(output, weight="unit"):
    """Imbalance of the energy identity at every ``t_n``.

    ``M(t) - M(0) + int |theta|^2 + 3 int int |u_x|^2 rho'`` minus
    ``b int int |u|^2 rho' + 2a Im int int u_x conj(u) rho'``
    ``+ 2 Im int int f0 conj(u) rho + 2 Im int int f1 (conj(u) rho)_x``.
    The identity holds for homogeneous boundary data.
    """
    led = output.energy_ledger
    if not led:
        raise ValueError("output was computed without an energy ledger")
    grid = output.u.grid
    p = output.input.params
    e = led[weight]
    wt = trapezoid_weights(2, grid.dt)

    def cumint(v):
        acc = np.zeros_like(v, dtype=float)
        acc[1:] = np.cumsum(wt[0] * (v[:-1] + v[1:]))
        return acc

    lhs = e["mass"] - e["mass"][0] + cumint(led["theta2"]) + 3 * cumint(e["dissipation"])
    rhs = (p.b * cumint(e["b_term"]) + 2 * p.a * cumint(e["a_term"])
           + 2 * cumint(e["f0_term"]) + 2 * cumint(e["f1_term"]))
    return lhs - rhs


def check_energy_identity(output, weight="unit"):
    """Maximal absolute imbalance over time of the energy identity."""
    return float(np.max(np.abs(energy_residuals(output, weight))))
