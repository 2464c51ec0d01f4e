"""Grids, field containers, inner products, norms and the discrete operator.

The state lives on nodes ``x_j = j dx``, ``j = 0..Nx+1``.  The two boundary
nodes carry Dirichlet data (mu at x=0, nu at x=R); the ``Nx`` interior nodes
are the unknowns.  Spatial integrals use the diagonal summation-by-parts
norm of :mod:`hnls_control.sbp`, which is a degree-2 exact quadrature with
modified weights in a few nodes next to each end.
"""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .sbp import D0, block_size, sbp_operators

MIN_NODES = 8


@dataclass(frozen=True)
class GridSpec:
    R: float
    T: float
    Nx: int
    Nt: int

    def __post_init__(self):
        for name in ("R", "T"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ConfigError(f"{name} must be positive and finite, got {v}")
        for name in ("Nx", "Nt"):
            v = getattr(self, name)
            if int(v) != v or v < MIN_NODES:
                raise ConfigError(f"{name} must be an integer >= {MIN_NODES}, got {v}")
        object.__setattr__(self, "R", float(self.R))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "Nx", int(self.Nx))
        object.__setattr__(self, "Nt", int(self.Nt))

    @property
    def dx(self):
        return self.R / (self.Nx + 1)

    @property
    def dt(self):
        return self.T / self.Nt

    @property
    def x(self):
        return np.arange(self.Nx + 2) * self.dx

    @property
    def t(self):
        return np.arange(self.Nt + 1) * self.dt

    def refined(self, factor=2):
        """Grid with ``dx`` and ``dt`` divided by ``factor``."""
        return GridSpec(self.R, self.T, factor * (self.Nx + 1) - 1, factor * self.Nt)


@dataclass(frozen=True)
class EquationParams:
    """Coefficients of the equation; ``lam`` stands for lambda."""

    a: float = 0.0
    b: float = 1.0
    lam: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    p0: float = 2.0
    p1: float = 1.0

    def __post_init__(self):
        for name in ("a", "b", "lam", "beta", "gamma", "p0", "p1"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ConfigError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if not 1.0 <= self.p0 <= 4.0:
            raise ConfigError(f"p0 must lie in [1, 4], got {self.p0}")
        if not 1.0 <= self.p1 <= 2.0:
            raise ConfigError(f"p1 must lie in [1, 2], got {self.p1}")

    @property
    def is_linear(self):
        return self.lam == 0 and self.beta == 0 and self.gamma == 0

    def linear_part(self):
        return EquationParams(self.a, self.b, 0.0, 0.0, 0.0, self.p0, self.p1)


def _as_complex(values, shape, what):
    arr = np.array(values, dtype=complex)
    if arr.shape != shape:
        raise ValueError(f"{what} must have shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ComplexField:
    """Spatial snapshot on all ``Nx + 2`` nodes."""

    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        object.__setattr__(self, "values", _as_complex(self.values, (self.grid.Nx + 2,), "ComplexField"))

    @classmethod
    def zeros(cls, grid):
        return cls(np.zeros(grid.Nx + 2), grid)

    @property
    def interior(self):
        return self.values[1:-1]

    def __add__(self, other):
        return ComplexField(self.values + other.values, self.grid)

    def __sub__(self, other):
        return ComplexField(self.values - other.values, self.grid)

    def __mul__(self, s):
        return ComplexField(s * self.values, self.grid)

    __rmul__ = __mul__


@dataclass(frozen=True)
class TimeSeries:
    """Boundary datum or trace sampled at ``t_n``, ``n = 0..Nt``."""

    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        object.__setattr__(self, "values", _as_complex(self.values, (self.grid.Nt + 1,), "TimeSeries"))

    @classmethod
    def zeros(cls, grid):
        return cls(np.zeros(grid.Nt + 1), grid)

    def __add__(self, other):
        return TimeSeries(self.values + other.values, self.grid)

    def __sub__(self, other):
        return TimeSeries(self.values - other.values, self.grid)

    def __mul__(self, s):
        return TimeSeries(s * self.values, self.grid)

    __rmul__ = __mul__


@dataclass(frozen=True)
class SpaceTimeField:
    """Array of shape ``(Nt + 1, Nx + 2)``; row ``n`` is the snapshot at ``t_n``."""

    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        shape = (self.grid.Nt + 1, self.grid.Nx + 2)
        object.__setattr__(self, "values", _as_complex(self.values, shape, "SpaceTimeField"))

    @classmethod
    def zeros(cls, grid):
        return cls(np.zeros((grid.Nt + 1, grid.Nx + 2)), grid)

    @property
    def snapshots(self):
        return [ComplexField(v, self.grid) for v in self.values]

    def snapshot(self, n):
        return ComplexField(self.values[n], self.grid)

    def __add__(self, other):
        return SpaceTimeField(self.values + other.values, self.grid)

    def __sub__(self, other):
        return SpaceTimeField(self.values - other.values, self.grid)

    def __mul__(self, s):
        return SpaceTimeField(s * self.values, self.grid)

    __rmul__ = __mul__


@dataclass(frozen=True)
class DiscreteOperator:
    """Semi-discrete operator ``u' = A u + gmu mu + gnu nu + gh h`` on interior nodes.

    ``A`` is sparse (banded).  ``H`` holds the norm weights of the interior
    nodes.  ``d0`` and ``dR`` are full-grid rows (length ``Nx + 2``) of the
    one-sided derivative at ``x = 0`` and ``x = R``.  For the backward
    orientation ``A`` is the adjoint ``H^-1 A^* H`` of the forward matrix.
    """

    A: sp.csr_matrix
    gmu: np.ndarray
    gnu: np.ndarray
    gh: np.ndarray
    H: np.ndarray
    w_boundary: float
    d0: np.ndarray
    dR: np.ndarray
    orientation: str
    hermitian_excess: float
    tau: float = 1.0
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def shape(self):
        return self.A.shape


def quadrature_weights(grid):
    """Weights ``w`` with ``sum(w f)`` approximating the integral over ``[0, R]``."""
    h, w0, _ = _sbp(grid.Nx, grid.dx)
    return np.concatenate([[w0], h, [w0]])


def trapezoid_weights(n, step):
    w = np.full(n, step)
    w[0] = w[-1] = step / 2
    return w


@lru_cache(maxsize=64)
def _sbp(nx, dx):
    if block_size(nx) is None:
        raise ConfigError(f"Nx={nx} is too coarse for the boundary closures (need Nx >= 11)")
    return sbp_operators(nx, dx)


def trace_rows(grid):
    """Full-grid rows of the one-sided four-point derivative at x=0 and x=R."""
    n = grid.Nx + 2
    d0 = np.zeros(n)
    d0[:4] = D0 / grid.dx
    dR = np.zeros(n)
    dR[-4:] = -D0[::-1] / grid.dx
    return d0, dR


@lru_cache(maxsize=64)
def derivative_matrix(grid):
    """First derivative on all ``Nx + 2`` nodes.

    Interior rows are the summation-by-parts operator ``H^-1 (Q1, couplings)``;
    the two boundary rows use the one-sided four-point formula.
    """
    h, _, ops = _sbp(grid.Nx, grid.dx)
    q1, left, right = ops[1]
    n = grid.Nx + 2
    d = np.zeros((n, n))
    d[1:-1, 1:-1] = q1 / h[:, None]
    d[1:-1, 0] = left / h
    d[1:-1, -1] = right / h
    d0, dR = trace_rows(grid)
    d[0] = d0
    d[-1] = dR
    return sp.csr_matrix(d)


def hermitian_excess(A, H):
    """Largest eigenvalue of the Hermitian part of ``H A``, relative to ``||H A||``."""
    ha = H[:, None] * A
    sym = 0.5 * (ha + ha.conj().T)
    top = np.linalg.eigvalsh(sym)[-1]
    return top / max(np.linalg.norm(ha, 2), np.finfo(float).tiny)


@lru_cache(maxsize=64)
def _forward_operator(params, grid, tau):
    h, w0, ops = _sbp(grid.Nx, grid.dx)
    q1, l1, r1 = ops[1]
    q2, l2, r2 = ops[2]
    q3, l3, r3 = ops[3]
    a, b = params.a, params.b
    d0, dR = trace_rows(grid)
    dRi = dR[1:-1]
    hi = 1.0 / h
    A = hi[:, None] * (-q3 + 1j * a * q2 - b * q1) - tau * hi[:, None] * np.outer(dRi, dRi)
    gmu = hi * (-l3 + 1j * a * l2 - b * l1)
    gnu = hi * (-r3 + 1j * a * r2 - b * r1) - tau * hi * dRi * dR[-1]
    gh = tau * hi * dRi
    excess = hermitian_excess(A, h)
    if excess > 1e-8:
        raise RuntimeError(f"operator is not dissipative: relative Hermitian excess {excess:.3e}")
    return A, gmu, gnu, gh, h, w0, d0, dR, excess


def build_operator(params, grid, orientation="forward", tau=1.0):
    """Assemble the discrete ``A`` (forward) or its adjoint (backward).

    The boundary condition ``u_x(R) = h`` is imposed weakly by a penalty of
    strength ``tau``; with ``tau = 1`` the Hermitian part of ``H A`` equals
    ``-(d0 d0^* + dR dR^*)/2`` on the unknowns, the discrete counterpart of
    ``Re(Ay, y) = -|y'(0)|^2 / 2``.
    """
    if orientation not in ("forward", "backward"):
        raise ValueError(f"orientation must be 'forward' or 'backward', got {orientation!r}")
    A, gmu, gnu, gh, h, w0, d0, dR, excess = _forward_operator(params, grid, float(tau))
    if orientation == "backward":
        A = (A.conj().T * h[None, :]) / h[:, None]
        # the backward problem has data phi(0)=phi_x(0)=phi(R)=0; couplings unused
        gmu = np.zeros_like(gmu)
        gnu = np.zeros_like(gnu)
        gh = np.zeros_like(gh)
    return DiscreteOperator(
        A=sp.csr_matrix(A), gmu=gmu, gnu=gnu, gh=gh, H=h, w_boundary=w0,
        d0=d0, dR=dR, orientation=orientation, hermitian_excess=excess, tau=tau,
    )


def _weights(grid, weight):
    w = quadrature_weights(grid)
    if weight == "unit":
        return w
    if weight == "affine":
        return w * (1.0 + grid.x)
    raise ValueError(f"weight must be 'unit' or 'affine', got {weight!r}")


def inner_product(f, g, weight="unit"):
    """Quadrature approximation of the integral of ``f conj(g) rho`` over ``[0, R]``."""
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    return complex(np.sum(_weights(f.grid, weight) * f.values * np.conj(g.values)))


def l2_norm(values, grid, weight="unit"):
    return float(np.sqrt(np.sum(_weights(grid, weight) * np.abs(values) ** 2)))


def h1_seminorm(values, grid):
    """L2 norm of the first differences, midpoint rule on each cell."""
    dv = np.diff(values) / grid.dx
    return float(np.sqrt(grid.dx * np.sum(np.abs(dv) ** 2)))


def norms(f):
    """``{'l2', 'h1_semi', 'sup'}`` of a spatial field."""
    v = f.values
    return {
        "l2": l2_norm(v, f.grid),
        "h1_semi": h1_seminorm(v, f.grid),
        "sup": float(np.max(np.abs(v))),
    }
