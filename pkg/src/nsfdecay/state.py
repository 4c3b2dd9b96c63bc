from dataclasses import dataclass

import numpy as np

from .spectral import SpectralField, GridSpec, inverse_transform


@dataclass(frozen=True, eq=False)
class State:
    """Density, velocity and temperature perturbations ``(a, upsilon, theta)`` at time ``t``."""

    a: SpectralField
    upsilon: SpectralField
    theta: SpectralField
    t: float = 0.0

    def __post_init__(self):
        g = self.a.grid
        if self.upsilon.grid != g or self.theta.grid != g:
            raise ValueError("state components live on different grids")
        if self.a.comps != 1 or self.theta.comps != 1 or self.upsilon.comps != g.d:
            raise ValueError("state needs scalar a, theta and a d-vector upsilon")

    @property
    def grid(self) -> GridSpec:
        return self.a.grid

    def stack(self):
        """Coefficients as one array ``(d + 2, *shape)``: ``a, upsilon_1..d, theta``."""
        return np.concatenate([self.a.coeffs, self.upsilon.coeffs, self.theta.coeffs])

    @classmethod
    def from_stack(cls, grid, u, t=0.0):
        d = grid.d
        return cls(SpectralField(grid, u[:1].copy()), SpectralField(grid, u[1:d + 1].copy()),
                   SpectralField(grid, u[d + 1:].copy()), t)

    @classmethod
    def zeros(cls, grid, t=0.0):
        return cls.from_stack(grid, np.zeros((grid.d + 2,) + grid.shape, dtype=complex), t)

    def fields(self):
        return {"a": self.a, "upsilon": self.upsilon, "theta": self.theta}

    def min_density(self):
        """``min_x (1 + a(x))``."""
        return 1.0 + float(inverse_transform(self.a).values.min())
