"""Norms, critical lengths and empirical constants of the inequalities.

Critical lengths are ``R_{k,l} = 2 pi sqrt((k^2 + k l + l^2) / (3b + a^2))``
for positive integers ``k, l`` when ``3b + a^2 > 0``; there are none
otherwise.  The inequality scans report the largest observed ratio of the
left-hand side to the right-hand side over random grid functions; the
constants themselves are not known in closed form, so what is checked is
that the maximum is stable under grid refinement.
"""
import math
from dataclasses import dataclass

import numpy as np

from .core import GridSpec, h1_seminorm, l2_norm, quadrature_weights, trapezoid_weights


@dataclass(frozen=True)
class CriticalityVerdict:
    is_critical: bool
    witness: tuple = None
    radicand: float = 0.0
    distance: float = math.inf


@dataclass(frozen=True)
class InequalityReport:
    max_ratio: float
    samples: int
    argmax: str = ""


def critical_length(k, l, a, b):
    rad = 3 * b + a * a
    if rad <= 0:
        raise ValueError("no critical lengths when 3b + a^2 <= 0")
    return 2 * math.pi * math.sqrt((k * k + k * l + l * l) / rad)


def _index_bound(R_max, rad):
    return math.ceil(R_max * math.sqrt(rad) / (2 * math.pi)) + 1


def enumerate_critical_lengths(a, b, R_max):
    """Sorted ``(R, k, l)`` with ``R <= R_max``; each length once with its minimal witness."""
    if R_max <= 0:
        raise ValueError("R_max must be positive")
    rad = 3 * b + a * a
    if rad <= 0:
        return []
    n = _index_bound(R_max, rad)
    found = {}
    for k in range(1, n + 1):
        for l in range(k, n + 1):
            q = k * k + k * l + l * l
            R = 2 * math.pi * math.sqrt(q / rad)
            if R <= R_max * (1 + 1e-14):
                # identical lengths share q; keep the lexicographically smallest pair
                if q not in found or (k, l) < found[q][1:]:
                    found[q] = (R, k, l)
    return sorted(found.values())


def is_critical_length(R, a, b, tol=1e-9):
    """Classify ``R``; ``distance`` is to the nearest critical length."""
    if R <= 0 or tol <= 0:
        raise ValueError("R and tol must be positive")
    rad = 3 * b + a * a
    if rad <= 0:
        return CriticalityVerdict(False, None, rad, math.inf)
    # large enough to include the first critical length above R + tol
    n = _index_bound(R + tol, rad) + 2
    k, l = np.meshgrid(np.arange(1, n + 1), np.arange(1, n + 1), indexing="ij")
    keep = l >= k
    k, l = k[keep], l[keep]
    dist = np.abs(R - 2 * np.pi * np.sqrt((k * k + k * l + l * l) / rad))
    i = int(np.argmin(dist))
    crit = bool(dist[i] <= tol)
    return CriticalityVerdict(crit, (int(k[i]), int(l[i])) if crit else None, rad, float(dist[i]))


def x_norm(u):
    """``max_t ||u(t)||_{L2} + ||u_x||_{L2(Q_T)}`` of a space-time field."""
    grid = u.grid
    v = u.values
    wq = quadrature_weights(grid)
    sup = float(np.max(np.sqrt(np.sum(wq * np.abs(v) ** 2, axis=1))))
    dv = np.diff(v, axis=1) / grid.dx
    per_t = grid.dx * np.sum(np.abs(dv) ** 2, axis=1)
    wt = trapezoid_weights(grid.Nt + 1, grid.dt)
    return sup + float(np.sqrt(np.sum(wt * per_t)))


def h13_norm(g, grid=None):
    """Slobodeckij ``H^{1/3}(0,T)`` norm of a time series.

    ``(||g||^2 + int int |g(t)-g(s)|^2 / |t-s|^{1+2/3} dt ds)^{1/2}``.  The
    series is piecewise linear; off-diagonal cell pairs use the midpoint
    rule; each diagonal cell uses the exact value for a linear piece.
    """
    grid = grid or g.grid
    v = np.asarray(g.values if hasattr(g, "values") else g, dtype=complex)
    dt = grid.dt
    wt = trapezoid_weights(len(v), dt)
    l2sq = float(np.sum(wt * np.abs(v) ** 2))
    s = 1.0 / 3.0
    expo = 1 + 2 * s
    mid = 0.5 * (v[:-1] + v[1:])
    tm = (np.arange(len(mid)) + 0.5) * dt
    diff = np.abs(mid[:, None] - mid[None, :]) ** 2
    dist = np.abs(tm[:, None] - tm[None, :])
    np.fill_diagonal(dist, 1.0)
    off = diff / dist ** expo
    np.fill_diagonal(off, 0.0)
    semi = float(np.sum(off)) * dt * dt
    # a linear piece with slope c on a cell of length dt contributes
    # |c|^2 int_0^dt int_0^dt |t-s|^{1-2s} = |c|^2 * 2 dt^{3-2s} / ((2-2s)(3-2s))
    slope = np.diff(v) / dt
    semi += float(np.sum(np.abs(slope) ** 2)) * 2 * dt ** (3 - 2 * s) / ((2 - 2 * s) * (3 - 2 * s))
    return math.sqrt(l2sq + semi)


def l1_l2_norm(f, grid):
    """``int_0^T ||f(t)||_{L2} dt`` of a space-time field."""
    wq = quadrature_weights(grid)
    per_t = np.sqrt(np.sum(wq * np.abs(f.values) ** 2, axis=1))
    return float(np.sum(trapezoid_weights(grid.Nt + 1, grid.dt) * per_t))


def c0_of_data(problem):
    """Data size: ``||u0|| + ||uT|| + ||mu||_{1/3} + ||nu||_{1/3} + ||f||_{L1(L2)}``."""
    g = problem.grid
    return (l2_norm(problem.u0.values, g) + l2_norm(problem.uT.values, g)
            + h13_norm(problem.mu, g) + h13_norm(problem.nu, g) + l1_l2_norm(problem.f, g))


def random_smooth(rng, grid, n_modes=8, vanish=False, shape=()):
    """Random complex combination of low-frequency modes on the grid nodes.

    With ``vanish=True`` the function is zero at both ends (sine modes),
    otherwise cosines and a constant are mixed in.
    """
    x = grid.x / grid.R
    k = np.arange(1, n_modes + 1)
    decay = 1.0 / k
    c = (rng.standard_normal(shape + (n_modes,)) + 1j * rng.standard_normal(shape + (n_modes,))) * decay
    out = np.tensordot(c, np.sin(np.pi * np.outer(k, x)), axes=([-1], [0]))
    if not vanish:
        d = (rng.standard_normal(shape + (n_modes,)) + 1j * rng.standard_normal(shape + (n_modes,))) * decay
        out = out + np.tensordot(d, np.cos(np.pi * np.outer(k - 1, x)), axes=([-1], [0]))
    return out


def _sup(v):
    return float(np.max(np.abs(v)))


def interpolation_ratio(phi, grid, vanish=False):
    """``||phi||_inf / (||phi'||^{1/2} ||phi||^{1/2} + ||phi||)`` (second term dropped if ``vanish``)."""
    l2 = l2_norm(phi, grid)
    d = h1_seminorm(phi, grid)
    den = math.sqrt(d * l2) + (0.0 if vanish else l2)
    return _sup(phi) / den if den > 0 else 0.0


def interpolation_ratio_scan(grid, samples=1000, seed=0, vanish=False, n_modes=8):
    """Largest interpolation ratio over random smooth functions."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    best, arg = 0.0, -1
    for i in range(samples):
        phi = random_smooth(rng, grid, n_modes, vanish)
        r = interpolation_ratio(phi, grid, vanish)
        if r > best:
            best, arg = r, i
    return InequalityReport(best, samples, f"sample {arg}")


def _random_spacetime(rng, grid, n_modes=6):
    """Random smooth space-time field with a few temporal harmonics."""
    tt = grid.t / grid.T
    space = random_smooth(rng, grid, n_modes, vanish=False, shape=(3,))
    tc = rng.standard_normal((3,)) + 1j * rng.standard_normal((3,))
    temporal = np.stack([tc[j] * np.cos(np.pi * j * tt) for j in range(3)])
    return np.einsum("jn,jx->nx", temporal, space)


def _xnorm_array(v, grid):
    from .core import SpaceTimeField
    return x_norm(SpaceTimeField(v, grid))


def _l1l2(v, grid):
    wq = quadrature_weights(grid)
    return float(np.sum(trapezoid_weights(grid.Nt + 1, grid.dt) * np.sqrt(np.sum(wq * np.abs(v) ** 2, axis=1))))


def _l2l2(v, grid):
    wq = quadrature_weights(grid)
    return float(np.sqrt(np.sum(trapezoid_weights(grid.Nt + 1, grid.dt) * np.sum(wq * np.abs(v) ** 2, axis=1))))


ESTIMATE_RANGES = {"L7": (1.0, 4.0), "L8": (1.0, 2.0), "L9": (1.0, 2.0)}


def t_factor(kind, p, T):
    if kind == "L7":
        return T ** ((4 - p) / 4) + T
    return T ** ((2 - p) / 4) + T ** 0.5


def nonlinear_estimate_ratio(kind, p, u, v, w, grid):
    """LHS / (T-factor times product of X-norms) for one field tuple."""
    from .core import derivative_matrix
    T = grid.T
    if kind == "L7":
        lhs = _l1l2(np.abs(u) ** p * v, grid)
        rhs = _xnorm_array(u, grid) ** p * _xnorm_array(v, grid)
    elif kind == "L8":
        lhs = _l2l2(np.abs(u) ** p * v, grid)
        rhs = _xnorm_array(u, grid) ** p * _xnorm_array(v, grid)
    elif kind == "L9":
        wx = (derivative_matrix(grid) @ w.T).T
        lhs = _l1l2(np.abs(u) ** (p - 1) * v * wx, grid)
        rhs = _xnorm_array(u, grid) ** (p - 1) * _xnorm_array(v, grid) * _xnorm_array(w, grid)
    else:
        raise ValueError(f"unknown estimate {kind!r}")
    rhs *= t_factor(kind, p, T)
    return lhs / rhs if rhs > 0 else 0.0


def nonlinear_estimate_scan(kind, p, grid, samples=1000, seed=0):
    """Largest ratio of a nonlinear estimate over random smooth field tuples."""
    if kind not in ESTIMATE_RANGES:
        raise ValueError(f"unknown estimate {kind!r}")
    lo, hi = ESTIMATE_RANGES[kind]
    if not lo <= p <= hi:
        raise ValueError(f"p={p} outside [{lo}, {hi}] for {kind}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    best, arg = 0.0, -1
    for i in range(samples):
        u, v, w = (_random_spacetime(rng, grid) for _ in range(3))
        r = nonlinear_estimate_ratio(kind, p, u, v, w, grid)
        if r > best:
            best, arg = r, i
    return InequalityReport(best, samples, f"sample {arg}")


def spectral_trace_defect(R, a, b, Nx, cutoff=60.0):
    """Smallest ``|y'(0)| / ||y||_{H^1}`` over resolved eigenvectors of the discrete operator.

    Only eigenvectors with ``|lambda| <= cutoff`` enter; the rest are grid
    modes without a continuous counterpart.  Tends to zero under refinement
    at a critical length and stays bounded below away from it.
    """
    from .core import EquationParams, build_operator
    grid = GridSpec(R, 1.0, Nx, 8)
    op = build_operator(EquationParams(a=a, b=b), grid)
    lam, V = np.linalg.eig(op.A.toarray())
    V = V[:, np.abs(lam) <= cutoff]
    if V.shape[1] == 0:
        raise ValueError("no eigenmodes below the cutoff; raise cutoff")
    full = np.zeros((Nx + 2, V.shape[1]), dtype=complex)
    full[1:-1] = V
    tr = np.abs(op.d0 @ full)
    h1 = np.array([math.sqrt(l2_norm(full[:, j], grid) ** 2 + h1_seminorm(full[:, j], grid) ** 2)
                   for j in range(V.shape[1])])
    return float(np.min(tr / h1))
