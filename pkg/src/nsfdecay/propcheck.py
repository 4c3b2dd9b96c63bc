"""Invariant suites run by ``nsfdecay propcheck``.

Each check returns a :class:`Check`; a suite passes when all of its checks do.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import spectral as sp
from .besov import BesovParams, annulus_field, besov_norm, check_bernstein, check_interpolation
from .linear import (DimensionlessParams, LinearPropagator, condition_number, constructive_rate,
                     lyapunov_weight, mode_semigroup, operator_norms)
from .nsf import (PhysicalParams, coefficient_functions, effective_velocity, helmholtz_reconstruct,
                  nondimensionalize, perfect_gas)
from .solver import Stepper
from .state import State

SUITES = ("spectral", "besov", "linear", "nsf", "solver")


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.name}: {self.value:.3e} (tolerance {self.tolerance:.1e}) {self.detail}".rstrip()


def _leq(name, value, tol, detail=""):
    return Check(name, bool(value <= tol), float(value), float(tol), detail)


def _rel(a, b):
    scale = max(np.abs(b).max(), 1e-300)
    return float(np.abs(a - b).max() / scale)


def _random_state(grid, rng, scale=1.0):
    vals = rng.standard_normal((grid.d + 2,) + grid.shape) * scale
    u = sp.fft(vals, grid)
    u[(slice(None),) + (0,) * grid.d] = 0.0
    return State.from_stack(grid, u, 0.0)


def spectral_suite(seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for g in (sp.GridSpec(2, 32, 2 * np.pi), sp.GridSpec(3, 16, 10.0)):
        j_min, j_max = sp.block_range(g)
        total = sum(sp.block_symbol(g, j) for j in range(j_min, j_max + 1))
        nz = g.rho > 0
        out.append(_leq(f"partition of unity d={g.d}", float(np.abs(total[nz] - 1).max()), 1e-12))
        f = sp.PhysicalField(g, rng.standard_normal((2,) + g.shape))
        back = sp.inverse_transform(sp.forward_transform(f)).values
        out.append(_leq(f"transform round trip d={g.d}", _rel(back, f.values), 1e-12))
        v = sp.SpectralField(g, sp.fft(rng.standard_normal((g.d,) + g.shape), g))
        pv = sp.leray_project(v)
        out.append(_leq(f"Leray idempotent d={g.d}", _rel(sp.leray_project(pv).coeffs, pv.coeffs), 1e-12))
        out.append(_leq(f"Leray divergence-free d={g.d}",
                        float(np.abs(sp.divergence(pv).coeffs).max() / np.abs(v.coeffs).max()), 1e-12))
        st = _random_state(g, rng)
        w = effective_velocity(st)
        rec = helmholtz_reconstruct(w, st.a, sp.leray_project(st.upsilon))
        out.append(_leq(f"Helmholtz reconstruction d={g.d}", _rel(rec.coeffs, st.upsilon.coeffs), 1e-12))
        # div w = div upsilon - a away from the zero mode; w is a gradient
        div_w = sp.divergence(w).coeffs[0]
        target = (sp.divergence(st.upsilon) - st.a).coeffs[0]
        target[g.rho_dir == 0] = 0.0
        out.append(_leq(f"effective velocity divergence d={g.d}", _rel(div_w, target), 1e-12))
        out.append(_leq(f"effective velocity is a gradient d={g.d}",
                        float(np.abs(sp.leray_project(w).coeffs).max() / np.abs(w.coeffs).max()), 1e-12))
    return out


def besov_suite(seed=0):
    rng = np.random.default_rng(seed)
    g = sp.GridSpec(3, 32, 2 * np.pi)
    out = []
    br = check_bernstein(2, 2.0, 8, g, rng)
    lo, hi = 0.75 ** 2, (8.0 / 3.0) ** 2
    inside = lo <= br.ratio and br.ratio_max <= hi
    out.append(Check("Bernstein ratio p=2 in annulus bounds", inside, br.ratio, lo,
                     f"range [{br.ratio:.4f}, {br.ratio_max:.4f}] within [{lo:.4f}, {hi:.4f}]"))
    # j = 1 keeps every quartic product below the grid's Nyquist band, so the discrete identity is exact
    b4 = check_bernstein(1, 4.0, 4, g, rng)
    out.append(_leq("Bernstein integral identity p=4", b4.identity_error, 1e-6))
    worst = 0.0
    ok = True
    for _ in range(5):
        u = annulus_field(g, 1, rng) + annulus_field(g, 3, rng)
        s1, s2 = rng.uniform(-2, 0), rng.uniform(0.5, 3)
        th = rng.uniform(0.1, 0.9)
        ok &= check_interpolation(u, s1, s2, th, 2.0)
        mid = besov_norm(u, BesovParams(th * s2 + (1 - th) * s1, 2.0, math.inf))
        bound = (besov_norm(u, BesovParams(s1, 2.0, math.inf)) ** (1 - th)
                 * besov_norm(u, BesovParams(s2, 2.0, math.inf)) ** th)
        worst = max(worst, mid / bound)
    out.append(Check("interpolation log-convexity (constant 1)", bool(ok), worst, 1.0))
    return out


def linear_suite(seed=0):
    rng = np.random.default_rng(seed)
    out = []
    params = DimensionlessParams(1.0, 1.0, 0.5)
    worst = -np.inf
    ts = np.linspace(0.0, 5.0, 11)
    for _ in range(100):
        rho = rng.uniform(0.0, 5.0)
        v = rng.standard_normal(3)
        energy = [float(np.sum((mode_semigroup(rho, t, params)[0] @ v) ** 2)) for t in ts]
        worst = max(worst, float(np.max(np.diff(energy)) / energy[0]))
    out.append(_leq("mode-energy monotonicity (100 random modes)", max(worst, 0.0), 1e-12))
    rhos = rng.uniform(0, 3, 50)
    s, t = 0.7, 1.9
    et, _ = mode_semigroup(rhos, t, params)
    es, _ = mode_semigroup(rhos, s, params)
    ets, _ = mode_semigroup(rhos, s + t, params)
    out.append(_leq("semigroup composition", _rel(et @ es, ets), 1e-10))
    violations = 0
    for beta in (0.5, 1.0, 2.0):
        for gamma in (0.5, 1.0, 2.0):
            violations += certificate_violations(DimensionlessParams(beta, gamma))
    out.append(_leq("Lyapunov decay certificate violations", violations, 0))
    return out


def certificate_violations(params, rho0=1.0, n_rho=64, n_t=20, t_max=20.0, tol=1e-9):
    """Count ``(rho, t)`` pairs where ``||exp(t L)|| > sqrt(cond G) exp(-(c0/2) rho^2 t)``."""
    c0 = constructive_rate(params, rho0).c0
    if not c0 > 0:
        return n_rho * n_t
    rhos = np.linspace(rho0 / n_rho, rho0, n_rho)
    bound = np.sqrt(condition_number(rhos, lyapunov_weight(params)))
    bad = 0
    for t in np.linspace(0.0, t_max, n_t):
        norms = operator_norms(rhos, t, params)
        bad += int((norms > bound * np.exp(-0.5 * c0 * rhos ** 2 * t) + tol).sum())
    return bad


def nsf_suite(seed=0):
    out = []
    phys = PhysicalParams(lam=0.0, mu=0.5, kappa=1.0, cv=1.0)
    params, table = nondimensionalize(phys, perfect_gas(1.0))
    out.append(_leq("perfect gas R = C_v gives gamma = 1", abs(params.gamma - 1.0), 0.0))
    coeffs = coefficient_functions(np.zeros(4), table)
    out.append(_leq("coefficient functions vanish at a = 0",
                    max(float(np.abs(v).max()) for v in coeffs.values()), 0.0))
    a = np.linspace(-0.5, 2.0, 101)
    out.append(_leq("K1 = -I for the perfect gas", float(np.abs(table.K1(a) + table.I(a)).max()), 1e-12))
    return out


def solver_suite(seed=0):
    rng = np.random.default_rng(seed)
    out = []
    g = sp.GridSpec(3, 16, 8.0)
    phys = PhysicalParams(lam=0.0, mu=0.5, kappa=1.0, cv=1.0)
    params, table = nondimensionalize(phys, perfect_gas(1.0))
    st = _random_state(g, rng, 1e-3)
    exact = LinearPropagator(g, params).apply_array(st.stack(), 0.3)
    for scheme in ("IF-RK2", "IF-RK4"):
        stepper = Stepper(g, params, None, scheme, nonlinear=False)
        out.append(_leq(f"integrating-factor exactness {scheme}", _rel(stepper.step(st.stack(), 0.3), exact), 1e-12))
    zero = np.zeros_like(st.stack())
    stepper = Stepper(g, params, table, "IF-RK2")
    u = zero
    for _ in range(3):
        u = stepper.step(u, 0.1)
    out.append(_leq("zero state stays zero", float(np.abs(u).max()), 0.0))
    return out


_RUNNERS = {"spectral": spectral_suite, "besov": besov_suite, "linear": linear_suite,
            "nsf": nsf_suite, "solver": solver_suite}


def run_suite(name, seed=0):
    if name == "all":
        return [c for s in SUITES for c in _RUNNERS[s](seed)]
    if name not in _RUNNERS:
        raise ValueError(f"unknown suite {name!r}; expected one of {', '.join(SUITES)} or all")
    return _RUNNERS[name](seed)
