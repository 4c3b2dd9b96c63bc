"""Frequency-wise linear theory of the reformulated system.

At frequency magnitude ``rho`` the linearized dynamics of the density ``A``,
the longitudinal velocity ``Omega = i (xi/|xi|) . upsilon_hat`` and the
temperature ``Theta`` is ``d/dt (A, Omega, Theta) = L(rho) (A, Omega, Theta)``
with

    L(rho) = [[0, -rho, 0], [rho, -rho^2, gamma rho], [0, -gamma rho, -beta rho^2]],

while the solenoidal part of the velocity solves a heat equation with
diffusivity ``mu_tilde``.
"""

import math
from dataclasses import dataclass, field, asdict
from functools import lru_cache

import numpy as np
import scipy.linalg

from . import kernels
from .state import State


@dataclass(frozen=True)
class DimensionlessParams:
    beta: float
    gamma: float
    mu_tilde: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 0 < self.mu_tilde <= 1:
            raise ValueError(f"mu_tilde must lie in (0, 1], got {self.mu_tilde}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")

    @property
    def beta_tilde(self):
        return min(1.0, self.beta)


def symbol_matrix(rho, params):
    """Mode matrix ``L(rho)``; vectorized over ``rho`` (result shape ``rho.shape + (3, 3)``)."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("frequency magnitude must be nonnegative")
    b, g = params.beta, params.gamma
    out = np.zeros(rho.shape + (3, 3))
    out[..., 0, 1] = -rho
    out[..., 1, 0] = rho
    out[..., 1, 1] = -rho ** 2
    out[..., 1, 2] = g * rho
    out[..., 2, 1] = -g * rho
    out[..., 2, 2] = -b * rho ** 2
    return out


def mode_semigroup(rho, t, params, backend=None):
    """``(exp(t L(rho)), exp(-mu_tilde rho^2 t))``; both vectorized over ``rho``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("time must be nonnegative")
    rho = np.asarray(rho, dtype=float)
    mats = kernels.expm3(t * symbol_matrix(rho, params), backend=backend)
    return mats, np.exp(-params.mu_tilde * rho ** 2 * t)


class LinearPropagator:
    """Exact linear propagator ``E(t)`` on one grid.

    Modes are grouped by integer ``|k|^2`` so each distinct frequency gets a
    single 3x3 exponential; matrices are cached per time increment.
    """

    def __init__(self, grid, params, backend=None):
        self.grid = grid
        self.params = params
        self.backend = backend
        kk = np.rint((grid.rho_dir * grid.box_len / (2 * np.pi)) ** 2).astype(np.int64)
        uniq, inverse = np.unique(kk.ravel(), return_inverse=True)
        self.rho = 2 * np.pi / grid.box_len * np.sqrt(uniq.astype(float))
        self.index = inverse.astype(np.intp)
        rd = grid.rho_dir
        inv = np.zeros_like(rd)
        np.divide(1.0, rd, out=inv, where=rd > 0)
        self.xhat = np.ascontiguousarray((grid.xi * inv).reshape(grid.d, -1))
        self._cache = {}

    def factors(self, t):
        key = float(t)
        if key not in self._cache:
            if len(self._cache) > 16:
                self._cache.clear()
            self._cache[key] = mode_semigroup(self.rho, key, self.params, self.backend)
        return self._cache[key]

    def apply_array(self, u, t):
        """Propagate a stacked coefficient array ``(d + 2, *shape)``; returns a new array."""
        if t == 0:
            return u.copy()
        mats, heat = self.factors(t)
        out = np.array(u, dtype=complex, order="C", copy=True)
        flat = out.reshape(u.shape[0], -1)
        kernels.propagate(flat, self.xhat, self.index, np.ascontiguousarray(mats), heat, backend=self.backend)
        return out


@lru_cache(maxsize=8)
def _propagator(grid, params, backend=None):
    return LinearPropagator(grid, params, backend)


def apply_semigroup(u0, t, params, backend=None):
    """``E(t) U0``: exact solution of the linearized system at time ``u0.t + t``."""
    prop = _propagator(u0.grid, params, backend)
    return State.from_stack(u0.grid, prop.apply_array(u0.stack(), t), u0.t + t)


# -- Lyapunov functional ----------------------------------------------------------

@dataclass
class LyapunovData:
    beta: float
    gamma: float
    beta_tilde: float
    K: float
    C0: float
    rho0: float
    c0: float = None
    minimizing_rho: float = None
    form: str = "lyapunov"
    young_c0: float = None
    literal_form_c0: float = None
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        d = asdict(self)
        d.pop("extra")
        d.update(self.extra)
        return d


def lyapunov_weight(params):
    """``K`` with ``K gamma^2 = beta_tilde - K``; ``beta_tilde / 2`` when ``gamma = 0``."""
    bt = params.beta_tilde
    if params.gamma == 0:
        return bt / 2.0
    return bt / (1.0 + params.gamma ** 2)


def lyapunov_form(rho, K):
    """Matrix ``G(rho)`` of the functional ``|(A,Omega,Theta)|^2 + K(|rho A|^2 - 2 rho Re(A conj(Omega)))``."""
    rho = np.asarray(rho, dtype=float)
    g = np.zeros(rho.shape + (3, 3))
    g[..., 0, 0] = 1 + K * rho ** 2
    g[..., 0, 1] = g[..., 1, 0] = -K * rho
    g[..., 1, 1] = 1.0
    g[..., 2, 2] = 1.0
    return g


def dissipation_form(rho, params, K, form="lyapunov"):
    """Quadratic form ``D`` with ``d/dt L^2 <= -v^T D v``.

    ``lyapunov``: the exact derivative ``-(G L + L^T G)``;
    ``young``: diagonal bound after Young's inequality on the ``Theta A`` cross term;
    ``literal``: the diagonal weights ``beta_tilde rho^2 (2/(1+g^2), g^2/(1+g^2), 2)``
    taken literally (they are not implied by the derivative for all parameters).
    """
    rho = float(rho)
    bt, g = params.beta_tilde, params.gamma
    if form == "lyapunov":
        G = lyapunov_form(rho, K)
        L = symbol_matrix(rho, params)
        return -(G @ L + L.T @ G)
    if form == "young":
        return rho ** 2 * np.diag([K, 2 * (bt - K), 2 * bt - K * g ** 2])
    if form == "literal":
        return bt * rho ** 2 * np.diag([2 / (1 + g ** 2), g ** 2 / (1 + g ** 2), 2.0])
    raise ValueError(f"unknown dissipation form {form!r}")


def _rho_grid(rho0, n=64):
    return np.geomspace(rho0 * 1e-3, rho0, n)


def lyapunov_constants(params, rho0=1.0, n_rho=64):
    """``beta_tilde``, ``K`` and the norm-equivalence constant ``C0``.

    ``C0`` bounds ``L^2`` against ``|(A, rho A, Omega, Theta)|^2`` from both
    sides over ``rho in [0, rho0]``.
    """
    K = lyapunov_weight(params)
    c = 1.0
    for r in np.concatenate([[0.0], _rho_grid(rho0, n_rho)]):
        H = np.diag([1 + r ** 2, 1.0, 1.0])
        ev = scipy.linalg.eigh(lyapunov_form(r, K), H, eigvals_only=True)
        c = max(c, float(ev[-1]), 1.0 / float(ev[0]))
    return LyapunovData(params.beta, params.gamma, params.beta_tilde, K, c, rho0)


def local_rate(rho, params, K=None, form="lyapunov"):
    """``lambda_min(D, G) / rho^2`` at one frequency (``rho -> 0`` limit at ``rho == 0``)."""
    K = lyapunov_weight(params) if K is None else K
    r = max(float(rho), 1e-12)
    D = dissipation_form(r, params, K, form) / r ** 2
    return float(scipy.linalg.eigh(D, lyapunov_form(r, K), eigvals_only=True)[0])


def constructive_rate(params, rho0=1.0, n_rho=64, form="lyapunov"):
    """Decay constant ``c0`` certified by the Lyapunov functional on ``(0, rho0]``.

    ``L^2(t) <= exp(-c0 rho^2 t) L^2(0)``, hence
    ``|exp(t L(rho)) v| <= sqrt(cond G(rho)) exp(-(c0/2) rho^2 t) |v|``.
    """
    if not rho0 > 0:
        raise ValueError("rho0 must be positive")
    data = lyapunov_constants(params, rho0, n_rho)
    K = data.K
    rhos = _rho_grid(rho0, n_rho)

    def scan(f):
        rates = np.array([local_rate(r, params, K, f) for r in rhos])
        i = int(np.argmin(rates))
        return float(rates[i]), float(rhos[i])

    data.c0, data.minimizing_rho = scan(form)
    data.form = form
    data.literal_form_c0 = scan("literal")[0]
    # closed form: smallest Young weight over the largest eigenvalue of G on [0, rho0]
    bt, g = params.beta_tilde, params.gamma
    weights = [K, 2 * (bt - K), 2 * bt - K * g ** 2]
    gmax = 1 + K * rho0 ** 2 / 2 + math.sqrt(K ** 2 * rho0 ** 4 / 4 + K ** 2 * rho0 ** 2)
    data.young_c0 = min(weights) / gmax
    return data


def condition_number(rho, K):
    ev = np.linalg.eigvalsh(lyapunov_form(rho, K))
    return ev[..., -1] / ev[..., 0]


def spectral_abscissa(rho, params):
    """Largest real part among the eigenvalues of ``L(rho)``."""
    ev = np.linalg.eigvals(symbol_matrix(rho, params))
    return ev.real.max(axis=-1)


def operator_norms(rho, t, params):
    """``||exp(t L(rho))||_2`` for every ``rho`` (vector) at one time."""
    mats, _ = mode_semigroup(rho, t, params)
    return np.linalg.norm(mats, ord=2, axis=(-2, -1))


@dataclass
class EnvelopeReport:
    j: int
    t: np.ndarray
    envelope: np.ndarray
    rate: float
    """fitted exponential rate of the envelope"""
    c_fit: float
    """``rate / 2^{2j}``"""
    c0: float
    rho0: float
    certified_rate: float
    """``(c0/2) (3 2^j / 4)^2``"""
    certificate_ok: bool
    monotone: bool

    @property
    def ok(self):
        return self.certificate_ok and self.monotone and self.rate >= self.certified_rate * (1 - 1e-9)


def block_decay_envelope(j, params, t_grid=None, j0=0, rho0=1.0, n_rho=64):
    """Operator-norm envelope ``sup_{rho in annulus_j} ||exp(t L(rho))||_2`` and its exponential rate.

    ``c0`` is certified on ``(0, max(rho0, 8 2^j / 3)]`` so the whole annulus is covered.
    """
    if j > j0:
        raise ValueError(f"block {j} lies above the low-frequency threshold j0={j0}")
    lo, hi = 0.75 * 2.0 ** j, 8.0 / 3.0 * 2.0 ** j
    if t_grid is None:
        t_grid = np.linspace(0.0, 40.0, 41) / 4.0 ** j
    t_grid = np.asarray(t_grid, dtype=float)
    rho_cert = max(rho0, hi)
    lyap = constructive_rate(params, rho_cert, n_rho)
    rhos = np.geomspace(lo, hi, n_rho)
    norms = np.array([operator_norms(rhos, t, params) for t in t_grid])
    env = norms.max(axis=1)
    bound = np.sqrt(condition_number(rhos, lyap.K))[None, :] * np.exp(
        -0.5 * lyap.c0 * rhos[None, :] ** 2 * t_grid[:, None])
    cert_ok = bool(np.all(norms <= bound + 1e-9))
    monotone = bool(np.all(np.diff(env) <= 1e-12))
    tail = t_grid >= t_grid[-1] / 2
    slope = np.polyfit(t_grid[tail], np.log(env[tail]), 1)[0]
    rate = -float(slope)
    return EnvelopeReport(j, t_grid, env, rate, rate / 4.0 ** j, lyap.c0, rho_cert,
                          0.5 * lyap.c0 * lo ** 2, cert_ok, monotone)
