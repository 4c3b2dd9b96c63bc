"""Periodic-grid Fourier infrastructure and Littlewood-Paley operators.

Transforms use the continuum-calibrated normalization

    u_hat(k) = h^d * sum_x u(x) exp(-i xi.x),   xi = 2 pi k / L,   h = L / n,

so that Parseval reads ``h^d sum |u|^2 = L^-d sum |u_hat|^2`` and discrete
norms approximate their whole-space counterparts directly.

Two frequency magnitudes are kept on every grid: ``rho`` is the exact
``|xi|`` and drives radial symbols (dyadic blocks, ``Lambda^s``, Besov weights);
``xi``/``rho_dir`` have the Nyquist components zeroed and drive odd or
directional symbols (gradients, divergence, Leray, the linear semigroup), which
keeps real data real.
"""

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft

CHI_INNER = 3.0 / 4.0
CHI_OUTER = 4.0 / 3.0

_workers = None


def set_threads(n):
    """Number of FFT worker threads (``None`` means single-threaded)."""
    global _workers
    _workers = n


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid ``[0, L)^d`` with ``n`` points per axis."""

    d: int
    n: int
    box_len: float

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not self.box_len > 0:
            raise ValueError(f"box_len must be positive, got {self.box_len}")

    @property
    def h(self):
        return self.box_len / self.n

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def volume(self):
        return self.box_len ** self.d

    @property
    def xi_min(self):
        """Smallest nonzero frequency magnitude ``2 pi / L``."""
        return 2.0 * np.pi / self.box_len

    @cached_property
    def k1d(self):
        return np.fft.fftfreq(self.n, 1.0 / self.n).astype(int)

    @cached_property
    def xi_exact(self):
        k = 2.0 * np.pi / self.box_len * self.k1d
        return np.stack(np.meshgrid(*([k] * self.d), indexing="ij"))

    @cached_property
    def xi(self):
        k = 2.0 * np.pi / self.box_len * self.k1d
        k = np.where(self.k1d == -self.n // 2, 0.0, k)
        return np.stack(np.meshgrid(*([k] * self.d), indexing="ij"))

    @cached_property
    def rho(self):
        return np.sqrt((self.xi_exact ** 2).sum(axis=0))

    @cached_property
    def rho_dir(self):
        return np.sqrt((self.xi ** 2).sum(axis=0))

    @cached_property
    def coords(self):
        x = np.arange(self.n) * self.h
        return np.stack(np.meshgrid(*([x] * self.d), indexing="ij"))

    @cached_property
    def nyquist_mask(self):
        """Modes with some ``k_i = -n/2``; no directional symbol acts on them."""
        return self.rho_dir != self.rho

    @cached_property
    def dealias_mask(self):
        """2/3-rule mask: keep modes with every ``|k_i| < n/3``."""
        keep = np.abs(self.k1d) < self.n / 3.0
        mask = np.ones(self.shape, dtype=bool)
        for ax in range(self.d):
            sl = [None] * self.d
            sl[ax] = slice(None)
            mask = mask & keep[tuple(sl)]
        return mask

    def as_dict(self):
        return {"d": self.d, "n": self.n, "box_len": self.box_len}


@dataclass(frozen=True, eq=False)
class PhysicalField:
    """Real samples, shape ``(comps, n, ..., n)``."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape[1:] != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")

    @property
    def comps(self):
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex Fourier coefficients, shape ``(comps, n, ..., n)`` in FFT index order."""

    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape[1:] != self.grid.shape:
            raise ValueError(f"coeffs shape {self.coeffs.shape} does not match grid {self.grid.shape}")

    @property
    def comps(self):
        return self.coeffs.shape[0]

    def __add__(self, other):
        _same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, c):
        return SpectralField(self.grid, self.coeffs * c)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, grid, comps=1):
        return cls(grid, np.zeros((comps,) + grid.shape, dtype=complex))


def _same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise ValueError(f"grid mismatch: {f.grid} vs {g}")


def _axes(grid):
    return tuple(range(1, grid.d + 1))


def fft(values, grid):
    """Raw continuum-normalized forward transform of an array ``(comps, *shape)``."""
    return scipy.fft.fftn(values, axes=_axes(grid), workers=_workers) * grid.h ** grid.d


def ifft(coeffs, grid):
    """Raw inverse of :func:`fft`; returns the real part."""
    return scipy.fft.ifftn(coeffs, axes=_axes(grid), workers=_workers).real / grid.h ** grid.d


def forward_transform(f):
    if not np.all(np.isfinite(f.values)):
        raise ValueError("non-finite values in physical field")
    return SpectralField(f.grid, fft(f.values, f.grid))


def inverse_transform(u):
    return PhysicalField(u.grid, ifft(u.coeffs, u.grid))


def apply_multiplier(u, symbol, at_zero=0.0):
    """Multiply ``u`` mode-wise by ``symbol(grid)``.

    ``symbol`` returns either an array broadcastable to the grid shape (scalar
    symbol) or one of shape ``(c_out, c_in, *shape)`` (matrix symbol). Its value
    at the zero mode is ignored and replaced by ``at_zero``.
    """
    grid = u.grid
    m = np.asarray(symbol(grid))
    zero = (0,) * grid.d
    nonzero = grid.rho > 0
    if m.ndim == grid.d + 2:
        if not np.all(np.isfinite(m[..., nonzero])):
            raise ValueError("multiplier is singular at a nonzero grid mode")
        m = m.copy()
        m[(slice(None), slice(None)) + zero] = at_zero
        out = np.einsum("ij...,j...->i...", m, u.coeffs)
    else:
        m = np.broadcast_to(m, grid.shape)
        if not np.all(np.isfinite(m[nonzero])):
            raise ValueError("multiplier is singular at a nonzero grid mode")
        m = np.array(m, dtype=np.result_type(m, float))
        m[zero] = at_zero
        out = u.coeffs * m
    return SpectralField(grid, out)


def _safe_power(r, s):
    out = np.zeros_like(r)
    np.power(r, s, out=out, where=r > 0)
    return out


def lambda_s(u, s):
    """``Lambda^s = |D|^s``; the zero mode is sent to zero unless ``s == 0``."""
    if s == 0:
        return SpectralField(u.grid, u.coeffs.copy())
    return apply_multiplier(u, lambda g: _safe_power(g.rho, s), at_zero=0.0)


def gradient(u):
    """Gradient of a scalar (or Jacobian of a vector: shape ``(comps * d, ...)``, row-major)."""
    g = u.grid
    out = 1j * g.xi[None, :] * u.coeffs[:, None]
    return SpectralField(g, out.reshape((u.comps * g.d,) + g.shape))


def divergence(u):
    g = u.grid
    if u.comps != g.d:
        raise ValueError("divergence needs a vector field")
    return SpectralField(g, (1j * g.xi * u.coeffs).sum(axis=0, keepdims=True))


def laplacian(u):
    return SpectralField(u.grid, -u.grid.rho_dir ** 2 * u.coeffs)


def grad_inv_neg_laplacian(u):
    """``nabla (-Delta)^{-1}`` of a scalar; zero mode set to zero."""
    g = u.grid
    r2 = g.rho_dir ** 2
    inv = np.zeros_like(r2)
    np.divide(1.0, r2, out=inv, where=r2 > 0)
    return SpectralField(g, 1j * g.xi * inv * u.coeffs[0])


def heat_factor(u, t, diffusivity):
    return apply_multiplier(u, lambda g: np.exp(-t * diffusivity * g.rho_dir ** 2), at_zero=1.0)


def leray_project(u):
    """Projection onto divergence-free fields, ``I - xi xi^T / |xi|^2`` per mode."""
    g = u.grid
    if u.comps != g.d:
        raise ValueError("Leray projection needs a vector field")
    r2 = g.rho_dir ** 2
    inv = np.zeros_like(r2)
    np.divide(1.0, r2, out=inv, where=r2 > 0)
    lon = (g.xi * u.coeffs).sum(axis=0) * inv
    return SpectralField(g, u.coeffs - g.xi * lon)


# -- Littlewood-Paley ---------------------------------------------------------

def _smooth_unit_step(x):
    """``E(x) / (E(x) + E(1-x))`` with ``E(x) = exp(-1/x)``; 0 at x<=0, 1 at x>=1."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 1.0, 1.0, 0.0)
    mid = (x > 0.0) & (x < 1.0)
    xm = x[mid]
    ea = np.exp(-1.0 / xm)
    eb = np.exp(-1.0 / (1.0 - xm))
    out[mid] = ea / (ea + eb)
    return out


def psi(r):
    """Radial profile of the low-frequency cut-off: 1 on [0, 3/4], 0 on [4/3, inf)."""
    r = np.asarray(r, dtype=float)
    return _smooth_unit_step((CHI_OUTER - r) / (CHI_OUTER - CHI_INNER))


def phi(r):
    """Radial profile of a dyadic block, ``psi(r/2) - psi(r)``; supported in [3/4, 8/3]."""
    return psi(np.asarray(r, dtype=float) / 2.0) - psi(r)


def block_range(grid):
    """Block indices ``(j_min, j_max)`` meeting the nonzero grid modes."""
    rmin = grid.xi_min
    rmax = float(grid.rho.max())
    j_min = int(np.floor(np.log2(rmin * 3.0 / 8.0)))
    while 8.0 / 3.0 * 2.0 ** j_min <= rmin:
        j_min += 1
    j_max = int(np.ceil(np.log2(rmax * 4.0 / 3.0)))
    while 0.75 * 2.0 ** j_max >= rmax:
        j_max -= 1
    return j_min, j_max


@lru_cache(maxsize=256)
def block_symbol(grid, j):
    return phi(grid.rho * 2.0 ** (-j))


@lru_cache(maxsize=64)
def low_symbol(grid, j0):
    return psi(grid.rho * 2.0 ** (-j0))


def dyadic_block(u, j):
    """``Delta_j u``: multiplication by ``phi(2^-j xi)``; zero outside the grid's block range."""
    return SpectralField(u.grid, u.coeffs * block_symbol(u.grid, j))


def low_high_split(u, j0):
    """``(S_j0 u, u - S_j0 u)``; the zero mode stays in the low part."""
    low = u.coeffs * low_symbol(u.grid, j0)
    return SpectralField(u.grid, low), SpectralField(u.grid, u.coeffs - low)
