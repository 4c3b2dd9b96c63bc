"""Physical parameters, pressure laws and the nonlinear terms of the rescaled system.

With ``rho = rho_bar (1 + a)`` and ``T = T_bar + T'`` the unknowns are rescaled
in time by ``nu_bar chi0^2``, in space by ``nu_bar chi0`` and the temperature by
``chi0 sqrt(C_v / T_bar)``, where ``nu = lambda + 2 mu``, ``nu_bar = nu / rho_bar``
and ``chi0 = dP/drho(rho_bar, T_bar)^(-1/2)``.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from . import spectral as sp
from .linear import DimensionlessParams

VACUUM_FLOOR = 0.1


class VacuumError(RuntimeError):
    """The density perturbation left the admissible range ``1 + a > 0`` (or the guard floor)."""


@dataclass(frozen=True)
class PhysicalParams:
    lam: float
    mu: float
    kappa: float
    cv: float
    rho_bar: float = 1.0
    T_bar: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"shear viscosity mu must be positive, got {self.mu}")
        if not self.nu > 0:
            raise ValueError(f"nu = lambda + 2 mu must be positive, got {self.nu}")
        if not self.kappa > 0:
            raise ValueError(f"heat conductivity kappa must be positive, got {self.kappa}")
        if not self.cv > 0:
            raise ValueError(f"specific heat cv must be positive, got {self.cv}")
        if not (self.rho_bar > 0 and self.T_bar > 0):
            raise ValueError("reference density and temperature must be positive")

    @property
    def nu(self):
        return self.lam + 2 * self.mu


@dataclass(frozen=True)
class PressureLaw:
    """``P(rho, T) = pi0(rho) + T pi1(rho)``.

    ``derivs0``/``derivs1`` map a density array to ``(f, f', f'')``.
    """

    kind: str
    params: dict
    derivs0: object
    derivs1: object

    def pi0(self, rho):
        return self.derivs0(rho)[0]

    def pi1(self, rho):
        return self.derivs1(rho)[0]

    def dpi0(self, rho):
        return self.derivs0(rho)[1]

    def dpi1(self, rho):
        return self.derivs1(rho)[1]

    def dP_drho(self, rho, T):
        return self.dpi0(rho) + T * self.dpi1(rho)

    def dP_dT(self, rho, T):
        return self.pi1(rho)


def perfect_gas(R=1.0):
    def d0(rho):
        z = np.zeros_like(np.asarray(rho, dtype=float))
        return z, z, z

    def d1(rho):
        rho = np.asarray(rho, dtype=float)
        return R * rho, np.full_like(rho, R), np.zeros_like(rho)

    return PressureLaw("perfect", {"R": R}, d0, d1)


def van_der_waals(alpha, beta, delta):
    """``pi0 = -alpha rho^2``, ``pi1 = beta rho / (delta - rho)``; smooth for ``rho < delta``."""
    def d0(rho):
        rho = np.asarray(rho, dtype=float)
        return -alpha * rho ** 2, -2 * alpha * rho, np.full_like(rho, -2 * alpha)

    def d1(rho):
        rho = np.asarray(rho, dtype=float)
        q = delta - rho
        return beta * rho / q, beta * delta / q ** 2, 2 * beta * delta / q ** 3

    return PressureLaw("vdw", {"alpha": alpha, "beta": beta, "delta": delta}, d0, d1)


def polynomial(pi0, pi1):
    """Coefficient lists in increasing degree."""
    c0 = np.asarray(pi0, dtype=float)
    c1 = np.asarray(pi1, dtype=float)

    def make(c):
        dc, ddc = npoly.polyder(c), npoly.polyder(c, 2)
        return lambda rho: (npoly.polyval(rho, c), npoly.polyval(rho, dc), npoly.polyval(rho, ddc))

    return PressureLaw("poly", {"pi0": list(pi0), "pi1": list(pi1)}, make(c0), make(c1))


def pressure_from_config(cfg):
    kind = cfg.get("kind")
    if kind == "perfect":
        return perfect_gas(float(cfg.get("R", 1.0)))
    if kind == "vdw":
        return van_der_waals(float(cfg["alpha"]), float(cfg["beta"]), float(cfg["delta"]))
    if kind == "poly":
        return polynomial(cfg.get("pi0", [0.0]), cfg.get("pi1", [0.0]))
    raise ValueError(f"unknown pressure kind {kind!r}")


@dataclass(frozen=True)
class StabilityReport:
    dP_drho: float
    dP_dT: float
    viscosity_ok: bool
    passed: bool
    reasons: tuple


def check_stability(phys, pl):
    """Linear stability of the reference state: ``dP/drho > 0`` and ``dP/dT > 0`` at equilibrium."""
    rb, tb = phys.rho_bar, phys.T_bar
    if pl.kind == "vdw" and pl.params["delta"] <= rb:
        raise ValueError(f"Van der Waals pressure is singular at rho_bar={rb} (delta={pl.params['delta']})")
    dr = float(pl.dP_drho(rb, tb))
    dt = float(pl.dP_dT(rb, tb))
    if not (math.isfinite(dr) and math.isfinite(dt)):
        raise ValueError("pressure law is not smooth at the reference state")
    reasons = []
    if dr <= 0:
        reasons.append(f"dP/drho = {dr:.6g} <= 0")
    if dt <= 0:
        reasons.append(f"dP/dT = {dt:.6g} <= 0")
    visc = phys.mu > 0 and phys.nu > 0
    if not visc:
        reasons.append("viscosity condition mu > 0, lambda + 2 mu > 0 violated")
    return StabilityReport(dr, dt, visc, not reasons, tuple(reasons))


# 32-point Gauss-Legendre rule for the K3 integral
_GL_X, _GL_W = np.polynomial.legendre.leggauss(32)


@dataclass(frozen=True, eq=False)
class CoefficientTable:
    phys: PhysicalParams
    pressure: PressureLaw
    chi0: float
    gamma: float

    @property
    def _scale(self):
        # chi0 sqrt(T_bar / C_v)
        return self.chi0 * math.sqrt(self.phys.T_bar / self.phys.cv)

    def _rho(self, a):
        return self.phys.rho_bar * (1.0 + np.asarray(a, dtype=float))

    def I(self, a):
        a = np.asarray(a, dtype=float)
        return a / (1.0 + a)

    def K1(self, a):
        a = np.asarray(a, dtype=float)
        ref = self.pressure.dP_drho(self.phys.rho_bar, self.phys.T_bar)
        return self.pressure.dP_drho(self._rho(a), self.phys.T_bar) / ((1.0 + a) * ref) - 1.0

    def K2(self, a):
        a = np.asarray(a, dtype=float)
        rb = self.phys.rho_bar
        return self._scale / rb * (self.pressure.pi1(self._rho(a)) / (1.0 + a) - self.pressure.pi1(rb))

    def K3_prime(self, a):
        a = np.asarray(a, dtype=float)
        return self._scale * self.pressure.dpi1(self._rho(a)) / (1.0 + a)

    def K3(self, a):
        """``chi0 sqrt(T_bar/C_v) int_0^a pi1'(rho_bar (1+z)) / (1+z) dz``."""
        a = np.asarray(a, dtype=float)
        if self.pressure.kind == "perfect":
            return self._scale * self.pressure.params["R"] * np.log1p(a)
        z = 0.5 * a[..., None] * (1.0 + _GL_X)
        vals = self.pressure.dpi1(self.phys.rho_bar * (1.0 + z)) / (1.0 + z)
        return self._scale * 0.5 * a * (vals @ _GL_W)

    def Kt1(self, a):
        a = np.asarray(a, dtype=float)
        rb = self.phys.rho_bar
        return self._scale / rb * (self.pressure.pi1(self._rho(a)) / (1.0 + a) - self.pressure.pi1(rb))

    def Kt2(self, a):
        a = np.asarray(a, dtype=float)
        return self.pressure.pi1(self._rho(a)) / (self.phys.cv * self.phys.rho_bar * (1.0 + a))

    @property
    def q_coeffs(self):
        """Weights ``(2 mu, lambda) / (nu chi0 sqrt(T_bar C_v))`` of the dissipation form."""
        f = 1.0 / (self.phys.nu * self.chi0 * math.sqrt(self.phys.T_bar * self.phys.cv))
        return 2.0 * self.phys.mu * f, self.phys.lam * f


def nondimensionalize(phys, pl):
    rep = check_stability(phys, pl)
    if not rep.passed:
        raise ValueError("reference state is not linearly stable: " + "; ".join(rep.reasons))
    chi0 = rep.dP_drho ** -0.5
    gamma = chi0 / phys.rho_bar * math.sqrt(phys.T_bar / phys.cv) * float(pl.pi1(phys.rho_bar))
    dp = DimensionlessParams(beta=phys.kappa / (phys.nu * phys.cv), gamma=gamma, mu_tilde=phys.mu / phys.nu)
    return dp, CoefficientTable(phys, pl, chi0, gamma)


def coefficient_functions(a_phys, table):
    """Pointwise ``I, K1, K2, K3, Kt1`` and ``Kt2(a) - Kt2(0)`` of a density perturbation (physical samples)."""
    a = a_phys.values[0] if isinstance(a_phys, sp.PhysicalField) else np.asarray(a_phys, dtype=float)
    if np.any(1.0 + a <= 0):
        raise VacuumError("1 + a <= 0: vacuum reached")
    return {"I": table.I(a), "K1": table.K1(a), "K2": table.K2(a), "K3": table.K3(a),
            "Kt1": table.Kt1(a), "Kt2_shift": table.Kt2(a) - table.Kt2(0.0)}


def lame_symbol(grid, mu_tilde):
    """Matrix symbol of ``mu_tilde Delta + (1 - mu_tilde) grad div``."""
    xi = grid.xi
    r2 = grid.rho_dir ** 2
    d = grid.d
    eye = np.eye(d).reshape((d, d) + (1,) * d)
    return -(mu_tilde * r2 * eye + (1 - mu_tilde) * xi[:, None] * xi[None, :])


class NonlinearTerms:
    """Pseudo-spectral evaluation of ``(f, g, k)`` with 2/3-rule dealiasing.

    Works on stacked coefficient arrays ``(d + 2, *shape)`` for the solver and
    is wrapped by :func:`nonlinear_terms` for :class:`State` objects.
    """

    def __init__(self, grid, table, dp, vacuum_floor=VACUUM_FLOOR):
        if grid.n < 8:
            raise ValueError("resolution too small for dealiasing")
        self.grid = grid
        self.table = table
        self.dp = dp
        self.floor = vacuum_floor
        self.mask = grid.dealias_mask
        self.lame = lame_symbol(grid, dp.mu_tilde)
        self.q2mu, self.qlam = table.q_coeffs

    def __call__(self, u):
        g = self.grid
        d = g.d
        xi = g.xi
        ik = 1j * xi
        u = u * self.mask
        a_h, v_h, th_h = u[0], u[1:d + 1], u[d + 1]

        def phys(c):
            return sp.ifft(c, g)

        a = phys(a_h[None])[0]
        if 1.0 + a.min() < self.floor:
            raise VacuumError(f"min(1 + a) = {1.0 + a.min():.4g} below guard {self.floor}")
        v = phys(v_h)
        th = phys(th_h[None])[0]
        grad_a = phys(ik * a_h)
        grad_th = phys(ik * th_h)
        # jac[i, j] = d_j v_i
        jac = phys((ik[None, :] * v_h[:, None]).reshape((d * d,) + g.shape)).reshape((d, d) + g.shape)
        lap_th = phys((-g.rho_dir ** 2 * th_h)[None])[0]
        lame_v = phys(np.einsum("ij...,j...->i...", self.lame, v_h))
        div_v = np.trace(jac)

        t = self.table
        I = t.I(a)
        K1, K2 = t.K1(a), t.K2(a)
        K3p = t.K3_prime(a)
        Kt1, Kt2 = t.Kt1(a), t.Kt2(a)
        sym = 0.5 * (jac + jac.transpose(1, 0, *range(2, d + 2)))
        q = self.q2mu * (sym ** 2).sum(axis=(0, 1)) + self.qlam * div_v ** 2

        av = a * v
        conv_v = np.einsum("j...,ij...->i...", v, jac)
        g_phys = (-conv_v - I * lame_v - K1 * grad_a - K2 * grad_th - th * K3p * grad_a)
        k_phys = (-(v * grad_th).sum(axis=0) - self.dp.beta * I * lap_th + q / (1.0 + a)
                  - (Kt1 + Kt2 * th) * div_v)

        out = np.empty_like(u)
        out[0] = -(ik * sp.fft(av, g)).sum(axis=0)
        out[1:d + 1] = sp.fft(g_phys, g)
        out[d + 1] = sp.fft(k_phys[None], g)[0]
        return out * self.mask


def nonlinear_terms(state, table, dp):
    """``(f, g, k)`` as spectral fields."""
    out = NonlinearTerms(state.grid, table, dp)(state.stack())
    d = state.grid.d
    g = state.grid
    return (sp.SpectralField(g, out[:1]), sp.SpectralField(g, out[1:d + 1]), sp.SpectralField(g, out[d + 1:]))


def effective_velocity(state):
    """``w = nabla (-Delta)^{-1} (a - div upsilon)``; zero mode set to zero."""
    return sp.grad_inv_neg_laplacian(state.a - sp.divergence(state.upsilon))


def helmholtz_reconstruct(w, a, pu):
    """``upsilon = w - nabla (-Delta)^{-1} a + P upsilon``."""
    if not (w.grid == a.grid == pu.grid):
        raise ValueError("grid mismatch")
    return w - sp.grad_inv_neg_laplacian(a) + pu
