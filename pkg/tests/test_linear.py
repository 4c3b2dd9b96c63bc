import math

import numpy as np
import pytest

from nsfdecay import spectral as sp
from nsfdecay.linear import (DimensionlessParams, LinearPropagator, apply_semigroup, block_decay_envelope,
                             condition_number, constructive_rate, local_rate, lyapunov_constants,
                             lyapunov_form, lyapunov_weight, mode_semigroup, operator_norms,
                             spectral_abscissa, symbol_matrix)
from nsfdecay.nsf import lame_symbol
from nsfdecay.state import State

P11 = DimensionlessParams(1.0, 1.0, 0.5)
GRID_PARAMS = [DimensionlessParams(b, g) for b in (0.5, 1.0, 2.0) for g in (0.5, 1.0, 2.0)]


def taylor_expm(a, terms=60):
    """Scaling and squaring around a plain truncated Taylor series."""
    s = max(0, int(math.ceil(math.log2(max(np.abs(a).sum(axis=0).max(), 1e-300)))) + 1)
    x = a / 2.0 ** s
    out, term = np.eye(3), np.eye(3)
    for k in range(1, terms):
        term = term @ x / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def random_state(grid, rng, scale=1.0):
    u = sp.fft(rng.standard_normal((grid.d + 2,) + grid.shape) * scale, grid)
    u[(slice(None),) + (0,) * grid.d] = 0
    return State.from_stack(grid, u)


class TestSymbol:
    def test_zero(self):
        assert np.array_equal(symbol_matrix(0.0, P11), np.zeros((3, 3)))

    def test_unit(self):
        assert np.array_equal(symbol_matrix(1.0, P11), [[0, -1, 0], [1, -1, 1], [0, -1, -1]])

    def test_trace(self, rng):
        for _ in range(10):
            p = DimensionlessParams(rng.uniform(0.1, 3), rng.uniform(0, 3))
            r = rng.uniform(0, 10)
            assert math.isclose(np.trace(symbol_matrix(r, p)), -(1 + p.beta) * r * r, rel_tol=1e-14)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            symbol_matrix(-1.0, P11)

    @pytest.mark.parametrize("kw", [dict(beta=0, gamma=1), dict(beta=1, gamma=-1), dict(beta=1, gamma=1, mu_tilde=0),
                                    dict(beta=1, gamma=1, mu_tilde=1.5)])
    def test_param_invariants(self, kw):
        with pytest.raises(ValueError):
            DimensionlessParams(**kw)


class TestSemigroup:
    def test_t0_identity(self):
        m, h = mode_semigroup(np.array([0.0, 0.3, 7.0]), 0.0, P11)
        assert np.allclose(m, np.eye(3), atol=0) and np.all(h == 1)

    def test_rho0_identity(self):
        m, h = mode_semigroup(0.0, 123.0, P11)
        assert np.allclose(m, np.eye(3), atol=1e-15) and h == 1

    def test_taylor_oracle(self):
        m, _ = mode_semigroup(1.0, 1.0, P11)
        assert np.abs(m - taylor_expm(symbol_matrix(1.0, P11))).max() < 1e-10

    @pytest.mark.parametrize("rho,t", [(0.05, 3.0), (2.0, 0.7), (10.0, 0.5)])
    def test_taylor_oracle_more(self, rho, t):
        p = DimensionlessParams(2.0, 0.5)
        m, _ = mode_semigroup(rho, t, p)
        assert np.abs(m - taylor_expm(t * symbol_matrix(rho, p))).max() < 1e-10

    def test_composition(self, rng):
        rhos = rng.uniform(0, 4, 40)
        a, _ = mode_semigroup(rhos, 0.4, P11)
        b, _ = mode_semigroup(rhos, 1.3, P11)
        c, _ = mode_semigroup(rhos, 1.7, P11)
        assert np.abs(a @ b - c).max() < 1e-10

    def test_heat_factor(self):
        _, h = mode_semigroup(np.array([2.0]), 0.5, P11)
        assert math.isclose(h[0], math.exp(-0.5 * 4 * 0.5))

    def test_negative_time(self):
        with pytest.raises(ValueError):
            mode_semigroup(1.0, -1.0, P11)

    def test_energy_monotone(self, rng):
        ts = np.linspace(0, 8, 33)
        for _ in range(100):
            rho = rng.uniform(0, 5)
            v = rng.standard_normal(3)
            e = [np.sum((mode_semigroup(rho, t, P11)[0] @ v) ** 2) for t in ts]
            assert np.all(np.diff(e) <= 1e-12 * e[0])


class TestApplySemigroup:
    grid = sp.GridSpec(3, 16, 9.0)

    def test_t0(self, rng):
        u = random_state(self.grid, rng)
        out = apply_semigroup(u, 0.0, P11)
        assert np.array_equal(out.stack(), u.stack()) and out.t == u.t

    def test_pde_residual(self, rng):
        g = self.grid
        u0 = random_state(g, rng)
        t, h = 0.8, 1e-4
        um, uc, up = (apply_semigroup(u0, s, P11).stack() for s in (t - h, t, t + h))
        dudt = (up - um) / (2 * h)
        d = g.d
        ik = 1j * g.xi
        a, v, th = uc[0], uc[1:d + 1], uc[d + 1]
        rhs = np.empty_like(uc)
        rhs[0] = -(ik * v).sum(axis=0)
        rhs[1:d + 1] = np.einsum("ij...,j...->i...", lame_symbol(g, P11.mu_tilde), v) - ik * a - P11.gamma * ik * th
        rhs[d + 1] = -P11.beta * g.rho_dir ** 2 * th - P11.gamma * (ik * v).sum(axis=0)
        # modes cut by the Nyquist convention carry no derivative information
        keep = g.rho_dir > 0
        err = np.abs((dudt - rhs)[:, keep]).max() / np.abs(rhs).max()
        assert err < 1e-6

    def test_solenoidal_heat(self, rng):
        g = self.grid
        v = sp.leray_project(sp.SpectralField(g, sp.fft(rng.standard_normal((3,) + g.shape), g)))
        z = sp.SpectralField.zeros(g)
        out = apply_semigroup(State(z, v, z), 1.3, P11)
        assert np.abs(out.a.coeffs).max() < 1e-14 and np.abs(out.theta.coeffs).max() < 1e-14
        expected = sp.heat_factor(v, 1.3, P11.mu_tilde).coeffs
        assert np.abs(out.upsilon.coeffs - expected).max() < 1e-12 * np.abs(expected).max()

    def test_zero_mode_fixed(self, rng):
        g = self.grid
        u = random_state(g, rng).stack()
        u[:, 0, 0, 0] = [1, 2, 3, 4, 5]
        out = apply_semigroup(State.from_stack(g, u), 2.0, P11).stack()
        assert np.array_equal(out[:, 0, 0, 0], u[:, 0, 0, 0])

    def test_commutes_with_blocks(self, rng):
        g = self.grid
        u = random_state(g, rng)
        t = 0.9
        for j in range(*sp.block_range(g)):
            lhs = sp.dyadic_block(apply_semigroup(u, t, P11).a, j).coeffs
            blocked = State(sp.dyadic_block(u.a, j), sp.dyadic_block(u.upsilon, j), sp.dyadic_block(u.theta, j))
            rhs = apply_semigroup(blocked, t, P11).a.coeffs
            assert np.abs(lhs - rhs).max() < 1e-10

    def test_composition_on_grid(self, rng):
        g = sp.GridSpec(2, 16, 5.0)
        u = random_state(g, rng)
        a = apply_semigroup(apply_semigroup(u, 0.3, P11), 0.5, P11).stack()
        b = apply_semigroup(u, 0.8, P11).stack()
        assert np.abs(a - b).max() < 1e-10 * np.abs(b).max()

    def test_propagator_cache_reuses_factors(self):
        prop = LinearPropagator(self.grid, P11)
        m1 = prop.factors(0.25)[0]
        assert prop.factors(0.25)[0] is m1


class TestLyapunov:
    def test_beta_gamma_one(self):
        d = lyapunov_constants(P11)
        assert d.beta_tilde == 1.0 and d.K == 0.5 and d.C0 >= 1

    def test_k_solves_balance(self, rng):
        for p in GRID_PARAMS:
            K = lyapunov_weight(p)
            assert math.isclose(K * p.gamma ** 2, p.beta_tilde - K)

    def test_gamma_zero_weight(self):
        p = DimensionlessParams(2.0, 0.0)
        assert lyapunov_weight(p) == 0.5
        assert constructive_rate(p).c0 > 0

    @pytest.mark.parametrize("rho", [0.1, 1.0, 10.0])
    def test_form_positive_definite(self, rho):
        for K in (0.25, 0.5, 1.0):
            G = lyapunov_form(rho, K)
            assert math.isclose(np.linalg.det(G[:2, :2]), 1 + K * (1 - K) * rho ** 2, rel_tol=1e-12)
            assert np.linalg.eigvalsh(G)[0] > 0

    def test_low_frequency_rate(self):
        # diagonal weights (1, 1/2, 2) at rho -> 0
        assert math.isclose(local_rate(0.0, P11, form="literal"), 0.5, rel_tol=1e-9)
        # exact derivative: D / rho^2 -> [[1, 0, 1/2], [0, 1, 0], [1/2, 0, 2]], smallest eigenvalue (3 - sqrt 2) / 2
        assert math.isclose(local_rate(0.0, P11), (3 - math.sqrt(2)) / 2, rel_tol=1e-9)

    def test_rate_value(self):
        d = constructive_rate(P11)
        assert d.c0 == pytest.approx(0.48208, abs=1e-4)
        assert d.young_c0 <= d.c0

    @pytest.mark.parametrize("p", GRID_PARAMS)
    def test_constructive_never_beats_sharp(self, p):
        c0 = constructive_rate(p).c0
        rhos = np.geomspace(1e-3, 1, 64)
        sharp = np.min(-spectral_abscissa(rhos, p) / rhos ** 2)
        assert 0 < c0 <= 2 * sharp

    def test_certificate_random(self, rng):
        for p in GRID_PARAMS:
            c0 = constructive_rate(p).c0
            K = lyapunov_weight(p)
            for _ in range(20):
                rho = rng.uniform(1e-3, 1.0)
                t = rng.uniform(0, 50 / rho ** 2)
                lhs = operator_norms(np.array([rho]), t, p)[0]
                assert lhs <= math.sqrt(condition_number(rho, K)) * math.exp(-0.5 * c0 * rho ** 2 * t) + 1e-9

    def test_lyapunov_derivative_sign(self, rng):
        h = 1e-5
        for p in GRID_PARAMS[:3]:
            K = lyapunov_weight(p)
            for _ in range(20):
                rho, t = rng.uniform(0.01, 3), rng.uniform(0, 5)
                v = rng.standard_normal(3)
                G = lyapunov_form(rho, K)
                vals = [x @ G @ x for x in (mode_semigroup(rho, s, p)[0] @ v for s in (t, t + h))]
                assert (vals[1] - vals[0]) / h <= 1e-8

    def test_bad_rho0(self):
        with pytest.raises(ValueError):
            constructive_rate(P11, 0.0)

    def test_unknown_form(self):
        with pytest.raises(ValueError):
            constructive_rate(P11, form="other")


class TestAbscissa:
    def test_zero(self):
        assert spectral_abscissa(0.0, P11) == 0

    def test_high_frequency_limit(self):
        assert abs(spectral_abscissa(100.0, P11) + 1) < 0.05

    def test_bounded_by_certificate(self):
        for p in GRID_PARAMS:
            c0 = constructive_rate(p).c0
            rhos = np.linspace(0.01, 1, 50)
            assert np.all(spectral_abscissa(rhos, p) <= -0.5 * c0 * rhos ** 2 + 1e-12)


class TestBlockEnvelope:
    @pytest.mark.parametrize("j", range(-4, 1))
    def test_certified(self, j):
        rep = block_decay_envelope(j, P11)
        assert rep.envelope[0] == pytest.approx(1.0, abs=1e-12)
        assert rep.monotone and rep.certificate_ok and rep.ok
        assert rep.certified_rate <= rep.rate
        assert rep.c_fit <= 4 * rep.c0 / 2 * 4 and rep.c_fit > 0

    def test_above_threshold(self):
        with pytest.raises(ValueError):
            block_decay_envelope(1, P11)
