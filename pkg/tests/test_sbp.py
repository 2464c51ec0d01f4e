import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hnls_control.sbp import D0, EXACT, block_size, closure, sbp_operators


def full_derivative(n, dx, order):
    """Derivative of order ``order`` on the unknowns, boundary couplings included."""
    h, _, ops = sbp_operators(n, dx)
    q, left, right = ops[order]
    return h, q, left, right


def apply(order, n, dx, values):
    h, q, left, right = full_derivative(n, dx, order)
    return (q @ values[1:-1] + left * values[0] + right * values[-1]) / h


@pytest.mark.parametrize("n", [12, 20, 40])
@pytest.mark.parametrize("order", [1, 2, 3])
def test_polynomial_exactness(n, order):
    dx = 0.1
    x = np.arange(n + 2) * dx
    for k in range(EXACT[order] + 1):
        p = x ** k
        exact = np.zeros(n) if k < order else (
            np.prod(range(k - order + 1, k + 1)) * x[1:-1] ** (k - order))
        got = apply(order, n, dx, p)
        np.testing.assert_allclose(got, exact, atol=1e-8 * max(1.0, np.max(np.abs(exact))))


def test_quadrature_degree_two():
    for n in (11, 15, 30):
        R = 2.0
        dx = R / (n + 1)
        h, w0, _ = sbp_operators(n, dx)
        w = np.concatenate([[w0], h, [w0]])
        x = np.arange(n + 2) * dx
        for k in range(3):
            assert np.sum(w * x ** k) == pytest.approx(R ** (k + 1) / (k + 1), rel=1e-12)


def test_norm_positive_and_symmetric_structure():
    n, dx = 30, 0.05
    h, _, ops = sbp_operators(n, dx)
    assert np.all(h > 0)
    q1 = ops[1][0]
    q2 = ops[2][0]
    q3 = ops[3][0]
    # Q1 is skew on the unknowns (boundary nodes enter through couplings only)
    np.testing.assert_allclose(q1 + q1.T, 0, atol=1e-12 / dx)
    np.testing.assert_allclose(q2, q2.T, atol=1e-12 / dx)
    d0 = np.zeros(n)
    d0[:3] = D0[1:] / dx
    dR = d0[::-1] * -1
    np.testing.assert_allclose(q3 + q3.T, np.outer(d0, d0) - np.outer(dR, dR), atol=1e-9 / dx ** 2)


def test_block_size_rule():
    assert block_size(10) is None
    assert block_size(11) == 4
    assert block_size(14) == 4
    assert block_size(15) == 6
    with pytest.raises(ValueError):
        sbp_operators(8, 0.1)


def test_closure_cached():
    assert closure(6) is closure(6)


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(11, 60))
def test_first_derivative_of_affine(c0, c1, n):
    dx = 1.0 / (n + 1)
    x = np.arange(n + 2) * dx
    np.testing.assert_allclose(apply(1, n, dx, c0 + c1 * x), c1, atol=1e-9 * (1 + abs(c0) + abs(c1)))


def test_interior_fourth_order():
    errs = []
    for n in (31, 63, 127):
        dx = np.pi / (n + 1)
        x = np.arange(n + 2) * dx
        d = apply(1, n, dx, np.sin(x))
        mid = slice(n // 4, 3 * n // 4)
        errs.append(np.max(np.abs(d[mid] - np.cos(x[1:-1][mid]))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 3.5)
