"""The full control problem datum."""
from dataclasses import dataclass

import numpy as np

from .core import ComplexField, EquationParams, GridSpec, SpaceTimeField, TimeSeries


@dataclass(frozen=True)
class ControlProblem:
    """Problem data: steer ``u0`` to ``uT`` with boundary data ``mu``, ``nu`` and source ``f``.

    ``f1`` is an optional divergence-form source (the equation's right-hand
    side is ``f - (f1)_x``); it defaults to zero.
    """

    params: EquationParams
    grid: GridSpec
    u0: ComplexField
    uT: ComplexField
    mu: TimeSeries
    nu: TimeSeries
    f: SpaceTimeField
    f1: SpaceTimeField = None

    def __post_init__(self):
        for name in ("u0", "uT", "mu", "nu", "f"):
            if getattr(self, name).grid != self.grid:
                raise ValueError(f"{name} is not on the problem grid")
        if self.f1 is not None and self.f1.grid != self.grid:
            raise ValueError("f1 is not on the problem grid")

    @classmethod
    def zero(cls, params, grid):
        return cls(params, grid, ComplexField.zeros(grid), ComplexField.zeros(grid),
                   TimeSeries.zeros(grid), TimeSeries.zeros(grid), SpaceTimeField.zeros(grid))

    @property
    def c0(self):
        from .analysis import c0_of_data
        return c0_of_data(self)

    def scaled(self, s):
        """All data multiplied by ``s``."""
        f1 = None if self.f1 is None else self.f1 * s
        return ControlProblem(self.params, self.grid, self.u0 * s, self.uT * s,
                              self.mu * s, self.nu * s, self.f * s, f1)

    def with_params(self, params):
        return ControlProblem(params, self.grid, self.u0, self.uT, self.mu, self.nu, self.f, self.f1)

    def data_scale(self):
        """Largest L2-type size among the data, used to normalise residuals."""
        vals = [np.max(np.abs(self.u0.values)), np.max(np.abs(self.uT.values)),
                np.max(np.abs(self.mu.values)), np.max(np.abs(self.nu.values)),
                np.max(np.abs(self.f.values))]
        return float(max(vals))
