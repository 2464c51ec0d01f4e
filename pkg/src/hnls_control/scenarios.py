"""Analytic data presets and the standard test scenarios."""
import numpy as np

from .core import ComplexField, EquationParams, GridSpec, SpaceTimeField, TimeSeries
from .errors import ConfigError
from .problem import ControlProblem


def _amp(amplitude):
    if isinstance(amplitude, (list, tuple)):
        if len(amplitude) != 2:
            raise ConfigError(f"complex amplitude must be a (re, im) pair, got {amplitude!r}")
        return complex(float(amplitude[0]), float(amplitude[1]))
    return complex(amplitude)


def gaussian(s, center, width, amplitude=1.0):
    if not width > 0:
        raise ConfigError(f"gaussian width must be positive, got {width}")
    return _amp(amplitude) * np.exp(-((np.asarray(s) - center) / width) ** 2)


def sine(s, n, length, amplitude=1.0):
    if int(n) != n or n < 1:
        raise ConfigError(f"sine mode index must be a positive integer, got {n}")
    return _amp(amplitude) * np.sin(n * np.pi * np.asarray(s) / length)


PRESETS = ("gaussian", "sine", "zero")


def preset(entry, s, length):
    """Evaluate a preset mapping such as ``{"preset": "sine", "n": 1}`` on the nodes ``s``."""
    if entry is None:
        return np.zeros(len(s), dtype=complex)
    entry = dict(entry)
    name = entry.pop("preset", None)
    try:
        if name == "zero":
            if entry:
                raise TypeError(f"unexpected parameters {sorted(entry)}")
            return np.zeros(len(s), dtype=complex)
        if name == "gaussian":
            return gaussian(s, **entry)
        if name == "sine":
            return sine(s, length=length, **entry)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for preset {name!r}: {exc}") from None
    raise ConfigError(f"unknown preset {name!r}; known presets: {', '.join(PRESETS)}")


def linear_control_problem(Nx=64, Nt=256, R=3.0, T=0.5, a=0.0, b=1.0, center=1.5, width=0.3,
                           amplitude=1.0):
    """Steer zero to a gaussian with zero boundary data and no source."""
    grid = GridSpec(R, T, Nx, Nt)
    params = EquationParams(a=a, b=b)
    z = ControlProblem.zero(params, grid)
    uT = ComplexField(gaussian(grid.x, center, width, amplitude), grid)
    return ControlProblem(params, grid, z.u0, uT, z.mu, z.nu, z.f)


def cubic_problem(c0=1e-3, Nx=24, Nt=96, R=3.0, T=0.5, a=1.0, b=1.0, center=1.5, width=0.3):
    """Cubic equation (``lam = 1``), target a gaussian scaled to data size ``c0``."""
    base = linear_control_problem(Nx, Nt, R, T, a, b, center, width)
    base = base.with_params(EquationParams(a=a, b=b, lam=1.0, p0=2.0))
    return base.scaled(c0 / base.c0)


def energy_input(Nx, Nt, R=3.0, T=1.0, a=1.0, b=1.0):
    """Homogeneous boundary data with both sources switched on.

    ``u0`` vanishes at both ends together with its derivative at ``x = R``,
    so the data are compatible with the boundary conditions at ``t = 0``.
    """
    from .forward import ForwardInput
    grid = GridSpec(R, T, Nx, Nt)
    x, t = grid.x, grid.t
    s = np.sin(np.pi * x / R)
    u0 = (1 + 0.5j) * s ** 2 + 0.3j * s * np.sin(2 * np.pi * x / R)
    f0 = (1 - 0.5j) * np.outer(np.cos(2 * t), np.exp(-((x - 1.2) / 0.4) ** 2))
    f1 = np.outer(t, 0.5j * s + 0.2 * np.cos(x))
    return ForwardInput(u0=ComplexField(u0, grid), params=EquationParams(a=a, b=b), grid=grid,
                        f0=SpaceTimeField(f0, grid), f1=SpaceTimeField(f1, grid))


def time_preset(entry, grid):
    return TimeSeries(preset(entry, grid.t, grid.T), grid)


def space_preset(entry, grid):
    return ComplexField(preset(entry, grid.x, grid.R), grid)
