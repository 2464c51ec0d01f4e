"""Summation-by-parts closures for the first, second and third derivative.

The interior uses fourth-order centred stencils.  Near each end a block of
``m`` rows is replaced by coefficients solved from polynomial exactness
conditions, with one diagonal norm shared by all three operators:

    H D1 = Q1,  Q1 + Q1^T = boundary terms          (skew interior)
    H D2 = Q2,  Q2 = Q2^T                           (symmetric)
    H D3 = Q3,  Q3 + Q3^T = d0 d0^T - dR dR^T       (third-derivative flux)

where ``d0`` and ``dR`` are one-sided four-point first derivatives at the
ends.  The last identity is what makes the semi-discrete operator exactly
dissipative.  The closure is unknown-only: the two boundary nodes enter
through coupling columns, which is how Dirichlet data are eliminated.

The linear system is small (a few hundred unknowns) and is solved once per
block size and cached.
"""
from functools import lru_cache
from math import factorial

import numpy as np
import scipy.linalg as sla
from scipy.special import bernoulli

INTERIOR = {
    1: ({-2: 1 / 12, -1: -8 / 12, 1: 8 / 12, 2: -1 / 12}, "skew"),
    2: ({-2: -1 / 12, -1: 16 / 12, 0: -30 / 12, 1: 16 / 12, 2: -1 / 12}, "sym"),
    3: ({-3: 1 / 8, -2: -1.0, -1: 13 / 8, 1: -13 / 8, 2: 1.0, 3: -1 / 8}, "skew"),
}
# polynomial degree reproduced exactly by the boundary rows of each operator
EXACT = {1: 1, 2: 2, 3: 3}
# one-sided derivative at node 0 using nodes 0..3, exact for cubics
D0 = np.array([-11 / 6, 3.0, -1.5, 1 / 3])
QUAD_DEGREE = 2


def _system(m):
    n_nodes = 4 * m + 12
    d0 = np.zeros(n_nodes)
    d0[:3] = D0[1:]
    flux = 0.5 * np.outer(d0, d0)
    block = range(m)
    var = {}
    for i in block:
        var[("h", i)] = len(var)
    var[("w0",)] = len(var)
    for o, (_, kind) in INTERIOR.items():
        for i in block:
            for j in block:
                if (kind == "skew" and j > i) or (kind == "sym" and j >= i):
                    var[(o, i, j)] = len(var)
            var[(o, "a", i)] = len(var)
    n = len(var)
    x = np.arange(n_nodes + 2, dtype=float)
    hard, hb, soft, sb = [], [], [], []
    for o, (coef, kind) in INTERIOR.items():
        s0 = flux if o == 3 else np.zeros((n_nodes, n_nodes))
        for r in block:
            node = r + 1
            for k in range(EXACT[o] + 2):
                p = x ** k
                dk = factorial(k) / factorial(k - o) * node ** (k - o) if k >= o else 0.0
                row = np.zeros(n)
                rhs = 0.0
                for off, v in coef.items():
                    col = node + off - 1
                    if col >= 0 and col not in block:
                        rhs -= v * p[col + 1]
                for col in block:
                    rhs -= s0[r, col] * p[col + 1]
                    i, j = min(r, col), max(r, col)
                    if kind == "skew":
                        if i != j:
                            row[var[(o, i, j)]] += p[col + 1] if r == i else -p[col + 1]
                    else:
                        row[var[(o, i, j)]] += p[col + 1]
                row[var[(o, "a", r)]] = p[0]
                row[var[("h", r)]] = -dk
                if k <= EXACT[o]:
                    hard.append(row)
                    hb.append(rhs)
                else:
                    soft.append(row)
                    sb.append(rhs)
    # quadrature exactness: Euler-Maclaurin end correction for the far end
    big = n_nodes
    for k in range(QUAD_DEGREE + 1):
        row = np.zeros(n)
        if k == 0:
            row[var[("w0",)]] = 1.0
        for i in block:
            row[var[("h", i)]] = float(i + 1) ** k
        s = sum(float(i) ** k for i in range(m + 1, big)) + 0.5 * float(big) ** k
        em = 0.0
        bn = bernoulli(k + 2)
        for jj in range(1, k // 2 + 2):
            if 2 * jj - 1 > k:
                break
            em += bn[2 * jj] / factorial(2 * jj) * factorial(k) / factorial(k - (2 * jj - 1)) * big ** (k - (2 * jj - 1))
        hard.append(row)
        hb.append(big ** (k + 1) / (k + 1) - s + em)
    return var, np.array(hard), np.array(hb), np.array(soft), np.array(sb), flux


@lru_cache(maxsize=None)
def closure(m=6, reg=1e-2):
    """Solve for the closure coefficients of block size ``m``.

    Exactness and quadrature rows are imposed exactly; the remaining freedom
    minimises the next-degree truncation error plus ``reg`` times the
    distance to the plain interior (Toeplitz) coefficients.
    """
    var, a_hard, b_hard, a_soft, b_soft, flux = _system(m)
    xp, *_ = np.linalg.lstsq(a_hard, b_hard, rcond=None)
    if np.linalg.norm(a_hard @ xp - b_hard) > 1e-10:
        raise ValueError(f"closure with block size {m} is infeasible")
    z = sla.null_space(a_hard)
    x0 = np.zeros(len(var))
    for key, i in var.items():
        if key[0] == "h":
            x0[i] = 1.0
        elif key[0] == "w0":
            x0[i] = 0.5
        elif key[1] != "a":
            o, r, c = key
            x0[i] = INTERIOR[o][0].get(c - r, 0.0) - (flux[r, c] if o == 3 else 0.0)
    lhs = np.vstack([a_soft @ z, np.sqrt(reg) * z])
    rhs = np.concatenate([b_soft - a_soft @ xp, np.sqrt(reg) * (x0 - xp)])
    y, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    xs = xp + z @ y
    h = np.array([xs[var[("h", i)]] for i in range(m)])
    if np.any(h <= 0):
        raise ValueError(f"closure with block size {m} has a non-positive norm weight")
    return var, xs


def block_size(n):
    """Closure block used for ``n`` unknowns; ``None`` if the grid is too coarse."""
    if n >= 15:
        return 6
    if n >= 11:
        return 4
    return None


def sbp_operators(n, dx, m=None):
    """Norm weights and derivative matrices on ``n`` unknown nodes.

    Returns ``(h, w0, ops)`` where ``h`` are the norm weights of the unknown
    nodes (already multiplied by ``dx``), ``w0`` the weight of each boundary
    node, and ``ops[o] = (Q, left, right)`` with ``Q = H D_o`` restricted to
    the unknowns and ``left``/``right`` the columns multiplying the two
    boundary node values.  ``ops[3]`` includes the ``+d0 d0^T / 2`` and
    ``-dR dR^T / 2`` terms.
    """
    if m is None:
        m = block_size(n)
    if m is None or n < 2 * m + 3:
        raise ValueError(f"need at least {2 * (m or 4) + 3} unknowns, got {n}")
    var, xs = closure(m)
    h = np.ones(n)
    for i in range(m):
        h[i] = h[n - 1 - i] = xs[var[("h", i)]]
    w0 = xs[var[("w0",)]]
    d0 = np.zeros(m)
    d0[:3] = D0[1:]
    flip = np.eye(m)[::-1]
    ops = {}
    for o, (coef, kind) in INTERIOR.items():
        q = np.zeros((n, n))
        for off, v in coef.items():
            q += v * np.eye(n, k=off)
        blk = np.zeros((m, m))
        left = np.zeros(n)
        right = np.zeros(n)
        for i in range(m):
            left[i] = xs[var[(o, "a", i)]]
            for j in range(m):
                ii, jj = min(i, j), max(i, j)
                if kind == "skew":
                    if i != j:
                        v = xs[var[(o, ii, jj)]]
                        blk[i, j] = v if i < j else -v
                else:
                    blk[i, j] = xs[var[(o, ii, jj)]]
        if o == 3:
            blk = blk + 0.5 * np.outer(d0, d0)
        sgn = -1.0 if o % 2 else 1.0
        q[:m, :m] = blk
        q[n - m:, n - m:] = sgn * flip @ blk @ flip
        right[n - m:] = sgn * left[:m][::-1]
        scale = dx ** (o - 1)
        ops[o] = (q / scale, left / scale, right / scale)
    return h * dx, w0 * dx, ops
