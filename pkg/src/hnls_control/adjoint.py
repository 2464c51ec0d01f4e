"""Backward problem, the traces P and Lambda, and the duality identity.

``lambda_op`` is the exact adjoint of the control-to-terminal-state map
``S_0T : h -> u(T)`` (zero u0, mu, nu, f) with respect to the quadrature
inner product in space and trapezoid weights in time.  It therefore
satisfies

    <S_0T h, phi0> = int_0^T h conj(Lambda phi0) dt

to roundoff.  ``backward_trace`` integrates the backward equation with the
adjoint operator directly and reads ``phi_x(t, R)``; the two agree up to
discretisation error.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spl
from scipy.linalg import eigh

from .core import (ComplexField, SpaceTimeField, TimeSeries, build_operator,
                   inner_product, trapezoid_weights)
from .forward import ForwardInput, solve_forward, stepper


@dataclass(frozen=True)
class AdjointInput:
    phi0: ComplexField
    params: object
    grid: object

    def __post_init__(self):
        if not np.all(np.isfinite(self.phi0.values)):
            raise ValueError("phi0 must be finite")


@dataclass(frozen=True)
class ObservabilityReport:
    ratio: float
    samples: int
    worst_case: ComplexField
    infinite: bool = False
    subspace_dim: int = 0
    cutoff: float = np.inf


def S_0T(h, params, grid):
    """Terminal state driven by the control ``h`` alone (interior values)."""
    st = stepper(params, grid)
    hv = np.asarray(h.values if isinstance(h, TimeSeries) else h, dtype=complex)
    U = st.propagate(np.zeros(grid.Nx, dtype=complex), st.control_columns(hv))
    return U[-1]


def _lambda_interior(phi, st):
    """Lambda applied to interior values ``phi`` of shape (Nx,) or (Nx, k)."""
    grid = st.grid
    chi = st.adjoint_sweep(phi)
    gh = st.op.gh
    hw = st.op.H * gh
    # conj(<gh, chi_n>_H), shape (Nt, ...)
    s = np.tensordot(np.conj(hw), chi, axes=([0], [1]))
    w = trapezoid_weights(grid.Nt + 1, grid.dt)
    coef = np.zeros((grid.Nt + 1,) + s.shape[1:], dtype=complex)
    coef[:-1] += 0.5 * grid.dt * s
    coef[1:] += 0.5 * grid.dt * s
    wcol = w.reshape((-1,) + (1,) * (s.ndim - 1))
    return coef / wcol


def lambda_op(phi0, params, grid=None):
    """Discrete ``Lambda phi0`` as a time series (boundary values of phi0 ignored)."""
    grid = grid or phi0.grid
    st = stepper(params, grid)
    return TimeSeries(_lambda_interior(phi0.values[1:-1], st), grid)


def trace_P(u0, params, grid=None):
    """x=0 derivative trace of the homogeneous forward solution from ``u0``."""
    grid = grid or u0.grid
    out = solve_forward(ForwardInput(u0=u0, params=params.linear_part(), grid=grid), ledger=False)
    return out.theta


def step_trace_P(u0, params, grid=None):
    """x=0 derivative trace of the homogeneous solution at the step midpoints.

    Returns ``Nt`` values ``d0 . (u^n + u^{n+1}) / 2``.  This is the trace
    that enters the exact discrete energy balance of the scheme,

        ||u^Nt||^2 + dt sum_n |theta_{n+1/2}|^2 + dt sum_n |dR u^{n+1/2}|^2 = ||u0||^2

    (norms in the quadrature inner product, ``a`` and ``b`` arbitrary), so
    ``sqrt(dt sum |theta|^2) <= ||u0||`` holds to roundoff for every grid
    state.  The nodal trace of :func:`trace_P` approaches it as ``dt -> 0``.
    """
    grid = grid or u0.grid
    st = stepper(params, grid)
    U = st.propagate(np.asarray(u0.values[1:-1], dtype=complex))
    mid = 0.5 * (U[1:] + U[:-1])
    # zero Dirichlet data: only the interior part of d0 contributes
    return mid @ st.op.d0[1:-1]


def series_norm(ts, grid=None):
    grid = grid or ts.grid
    v = ts.values if isinstance(ts, TimeSeries) else np.asarray(ts)
    return float(np.sqrt(np.sum(trapezoid_weights(grid.Nt + 1, grid.dt) * np.abs(v) ** 2)))


def series_inner(f, g, grid):
    return complex(np.sum(trapezoid_weights(grid.Nt + 1, grid.dt) * f * np.conj(g)))


def check_duality(h, phi0, params):
    """Relative mismatch of ``<S_0T h, phi0>`` and ``int h conj(Lambda phi0) dt``."""
    grid = phi0.grid
    if h.grid != grid:
        raise ValueError("h and phi0 live on different grids")
    uT = np.zeros(grid.Nx + 2, dtype=complex)
    uT[1:-1] = S_0T(h, params, grid)
    lhs = inner_product(ComplexField(uT, grid), phi0)
    rhs = series_inner(h.values, lambda_op(phi0, params, grid).values, grid)
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), np.finfo(float).tiny)


def solve_backward(inp):
    """Backward problem ``phi_t = -A* phi``, ``phi(T) = phi0`` by Crank-Nicolson.

    Uses the backward-orientation operator; the boundary columns are zero
    (``phi(0) = phi(R) = 0``).  Returns the space-time field.
    """
    grid = inp.grid
    op = build_operator(inp.params.linear_part(), grid, "backward")
    eye = sp.identity(grid.Nx, format="csc", dtype=complex)
    lu = spl.splu((eye - 0.5 * grid.dt * op.A).tocsc())
    rhs = (eye + 0.5 * grid.dt * op.A).tocsr()
    phi = np.zeros((grid.Nt + 1, grid.Nx + 2), dtype=complex)
    phi[-1, 1:-1] = inp.phi0.values[1:-1]
    for n in range(grid.Nt - 1, -1, -1):
        phi[n, 1:-1] = lu.solve(rhs @ phi[n + 1, 1:-1])
    return SpaceTimeField(phi, grid)


def backward_trace(phi0, params, grid=None, tau=1.0):
    """PDE-defined ``Lambda``: the x=R derivative trace of the backward solution."""
    grid = grid or phi0.grid
    phi = solve_backward(AdjointInput(phi0, params, grid))
    op = build_operator(params.linear_part(), grid, "backward")
    return TimeSeries(tau * (phi.values @ op.dR), grid)


def _filtered_basis(params, grid, cutoff):
    st = stepper(params, grid)
    lam, V = np.linalg.eig(st.op.A.toarray())
    keep = np.abs(lam) <= cutoff
    return V[:, keep], st


def observability_scan(params, grid, samples=64, cutoff=60.0, seed=0):
    """Empirical constant ``max ||u0|| / ||P u0||`` over low-frequency states.

    The search space is spanned by the eigenvectors of the discrete operator
    with ``|lambda| <= cutoff``.  A fixed frequency cutoff makes the constant
    comparable across grids; the unfiltered grid modes with ``|lambda| dt``
    far above one are not resolved in time and are excluded.  Random
    samples give a lower bound; the maximiser itself comes from the
    generalized eigenproblem ``Gp c = mu Gu c`` of the two quadratic forms
    (the limit of power iteration), whose smallest ``mu`` is the inverse
    square of the constant.  ``Gu`` is positive definite, so this stays
    well posed when ``Gp`` is nearly singular.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    V, st = _filtered_basis(params, grid, cutoff)
    h = st.op.H
    k = V.shape[1]
    if k == 0:
        raise ValueError("no eigenmodes below the cutoff; raise cutoff")
    U = st.propagate(V.astype(complex))
    # x=0 trace with zero Dirichlet data: d0 restricted to the interior
    P = np.einsum("j,njk->nk", st.op.d0[1:-1], U)
    w = trapezoid_weights(grid.Nt + 1, grid.dt)
    Gp = P.conj().T @ (w[:, None] * P)
    Gu = V.conj().T @ (h[:, None] * V)
    Gp = 0.5 * (Gp + Gp.conj().T)
    Gu = 0.5 * (Gu + Gu.conj().T)
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((k, samples)) + 1j * rng.standard_normal((k, samples))
    num = np.real(np.einsum("ks,kl,ls->s", c.conj(), Gu, c))
    den = np.real(np.einsum("ks,kl,ls->s", c.conj(), Gp, c))
    sampled = float(np.max(np.sqrt(num / np.maximum(den, np.finfo(float).tiny))))
    mu, C = eigh(Gp, Gu)
    mu0 = max(float(mu[0]), 0.0)
    infinite = mu0 < (1e-14) ** 2
    ratio = np.inf if infinite else max(1.0 / np.sqrt(mu0), sampled)
    u0 = np.zeros(grid.Nx + 2, dtype=complex)
    u0[1:-1] = V @ C[:, 0]
    return ObservabilityReport(
        ratio=float(ratio), samples=samples, worst_case=ComplexField(u0, grid),
        infinite=bool(infinite), subspace_dim=k, cutoff=float(cutoff),
    )
