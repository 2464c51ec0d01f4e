import numpy as np
import pytest

from hnls_control.adjoint import (AdjointInput, backward_trace, check_duality, lambda_op,
                                  observability_scan, series_norm, step_trace_P, trace_P)
from hnls_control.core import ComplexField, EquationParams, GridSpec, TimeSeries, l2_norm, trapezoid_weights
from hnls_control.forward import ForwardInput, solve_forward

from .conftest import random_complex

P = EquationParams(a=0.0, b=1.0)


def field(rng, g):
    v = random_complex(rng, g.Nx + 2)
    v[0] = v[-1] = 0
    return ComplexField(v, g)


def test_zero_traces():
    g = GridSpec(3.0, 0.5, 16, 32)
    assert not np.any(trace_P(ComplexField.zeros(g), P).values)
    assert not np.any(lambda_op(ComplexField.zeros(g), P).values)
    assert check_duality(TimeSeries.zeros(g), ComplexField.zeros(g), P) == 0.0


def test_adjoint_input_rejects_nonfinite():
    g = GridSpec(3.0, 0.5, 16, 32)
    v = np.zeros(g.Nx + 2)
    v[3] = np.nan
    with pytest.raises(ValueError):
        AdjointInput(ComplexField(v, g), P, g)


def test_duality_random_pairs(rng):
    g = GridSpec(3.0, 1.0, 64, 128)
    for _ in range(5):
        h = TimeSeries(random_complex(rng, g.Nt + 1), g)
        assert check_duality(h, field(rng, g), P) <= 1e-12


def test_duality_scaling_invariance(rng):
    g = GridSpec(3.0, 0.5, 24, 48)
    p = EquationParams(a=1.0, b=0.5)
    h = TimeSeries(random_complex(rng, g.Nt + 1), g)
    phi = field(rng, g)
    r = check_duality(h, phi, p)
    r2 = check_duality(h * (3 - 1j), phi * 1e-4j, p)
    assert r <= 1e-12 and r2 <= 1e-12
    with pytest.raises(ValueError):
        check_duality(TimeSeries.zeros(GridSpec(3.0, 0.5, 24, 24)), phi, p)


def domain_state(rng, g, modes=6):
    """Random state vanishing with its derivative at both ends."""
    s = np.sin(np.pi * g.x / g.R)
    c = random_complex(rng, modes)
    return ComplexField(s ** 2 * sum(c[k] * np.sin((k + 1) * np.pi * g.x / g.R) for k in range(modes)), g)


@pytest.mark.parametrize("a,b", [(0.0, 1.0), (1.0, -0.5)])
def test_step_trace_energy_bound_exact(rng, a, b):
    g = GridSpec(3.0, 0.5, 32, 64)
    p = EquationParams(a=a, b=b)
    for _ in range(5):
        u0 = field(rng, g)
        nu0 = l2_norm(u0.values, g)
        th = step_trace_P(u0, p)
        assert np.sqrt(g.dt * np.sum(np.abs(th) ** 2)) <= nu0 * (1 + 1e-12)


def test_nodal_trace_bound_on_resolved_grid(rng):
    g = GridSpec(3.0, 0.5, 32, 512)
    for _ in range(5):
        u0 = domain_state(rng, g)
        assert series_norm(trace_P(u0, P)) <= l2_norm(u0.values, g) + 1e-6


def test_nodal_trace_approaches_step_trace(rng):
    gaps = []
    for nt in (64, 256, 1024):
        g = GridSpec(3.0, 0.5, 32, nt)
        rng_k = np.random.default_rng(7)
        u0 = domain_state(rng_k, g)
        nodal = series_norm(trace_P(u0, P))
        mid = np.sqrt(g.dt * np.sum(np.abs(step_trace_P(u0, P)) ** 2))
        gaps.append(abs(nodal - mid))
    assert gaps[0] > gaps[1] > gaps[2]


def test_lambda_bound(rng):
    g = GridSpec(3.0, 0.5, 32, 64)
    for _ in range(5):
        phi = field(rng, g)
        nphi = l2_norm(phi.values, g)
        assert series_norm(lambda_op(phi, P)) <= nphi + 1e-6


def test_lambda_bounded_below_on_smooth_states():
    # the reverse side of the two-sided bound, with an empirical constant
    g = GridSpec(3.0, 0.5, 32, 64)
    c = []
    for n in range(1, 5):
        phi = ComplexField(np.sin(n * np.pi * g.x / g.R) * np.sin(np.pi * g.x / g.R), g)
        c.append(l2_norm(phi.values, g) / series_norm(lambda_op(phi, P)))
    assert max(c) < 50


def test_observation_identity_converges():
    # ||u0||^2 = (1/T) int ||u||^2 dt + (1/T) int (T - t) |u_x(t, 0)|^2 dt for a = b = 0 weights
    defects = []
    for nx, nt in ((23, 32), (47, 64), (95, 128)):
        g = GridSpec(3.0, 0.5, nx, nt)
        s = np.sin(np.pi * g.x / g.R)
        u0 = ComplexField((1 + 1j) * s ** 2, g)
        out = solve_forward(ForwardInput(u0, EquationParams(a=0.0, b=0.0), g), ledger=False)
        w = trapezoid_weights(g.Nt + 1, g.dt)
        mass = np.array([l2_norm(v, g) ** 2 for v in out.u.values])
        theta2 = np.abs(out.theta.values) ** 2
        rhs = (np.sum(w * mass) + np.sum(w * (g.T - g.t) * theta2)) / g.T
        defects.append(abs(l2_norm(u0.values, g) ** 2 - rhs))
    assert defects[0] > defects[1] > defects[2]


def test_backward_trace_agrees_under_refinement():
    diffs = []
    for nx, nt in ((31, 64), (63, 128), (127, 256)):
        g = GridSpec(3.0, 0.5, nx, nt)
        s = np.sin(np.pi * g.x / g.R)
        phi = ComplexField(s ** 2 * (1 + 0.5j * np.cos(g.x)), g)
        diffs.append(series_norm(lambda_op(phi, P) - backward_trace(phi, P)))
    assert diffs[0] > diffs[1] > diffs[2]
    assert diffs[2] < 0.1 * series_norm(lambda_op(phi, P))


def test_observability_scan_basics():
    g = GridSpec(3.0, 1.0, 24, 48)
    rep = observability_scan(P, g, samples=16)
    assert np.isfinite(rep.ratio) and rep.ratio >= 1.0
    assert not rep.infinite
    assert rep.subspace_dim > 0
    u = rep.worst_case
    ratio = l2_norm(u.values, g) / series_norm(trace_P(u, P))
    assert ratio == pytest.approx(rep.ratio, rel=1e-6)
    with pytest.raises(ValueError):
        observability_scan(P, g, samples=0)
