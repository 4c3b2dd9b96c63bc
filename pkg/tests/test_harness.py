import json
import math

import numpy as np
import pytest
import scipy.integrate

from nsfdecay import spectral as sp
from nsfdecay.besov import BlockNormRecord, block_lp_norms
from nsfdecay.config import load_config
from nsfdecay.harness import (DecayParams, InitialDataSpec, bracket, compute_Dp, compute_Xp, dump_json,
                              fit_decay, fit_exponential, make_initial_data, norm_id, radial_linear_decay,
                              read_series_csv, run_experiment, saturation_time, series_table, write_series_csv)
from nsfdecay.linear import DimensionlessParams
from nsfdecay.solver import SolverConfig, integrate

P11 = DimensionlessParams(1.0, 1.0, 0.5)


class TestDecayParams:
    def test_defaults(self):
        dp = DecayParams()
        assert dp.s0 == 1.5 and math.isclose(dp.alpha, 3.49)
        assert dp.s_grid == (-1.49, 0.0, 1.0, 1.5, 2.5)

    @pytest.mark.parametrize("kw", [dict(p=1.5), dict(p=3.0), dict(s1=0.4), dict(s1=1.6), dict(eps=0.0),
                                    dict(eps=0.6), dict(s_grid=(3.0,))])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            DecayParams(**kw)

    def test_larger_dimension(self):
        dp = DecayParams(d=4, p=3.0, s1=0.5)
        assert math.isclose(dp.s0, 2 * 4 / 3 - 2)
        with pytest.raises(ValueError):
            DecayParams(d=5, p=4.0, s1=0.5)

    def test_strong_low(self):
        dp = DecayParams(eps=0.0, strong_low=True)
        assert dp.alpha == 3.5 and dp.s_grid[0] == -1.5

    def test_theory_exponent(self):
        assert DecayParams().theory_exponent(0) == -0.75


class TestInitialData:
    grid = sp.GridSpec(3, 32, 32.0)

    def test_zero_amplitude(self):
        st, rep = make_initial_data(InitialDataSpec("gaussian", 0.0), self.grid, DecayParams())
        assert np.all(st.stack() == 0) and rep["low_B-s1_2inf"] == 0

    @pytest.mark.parametrize("kind", ["gaussian", "power"])
    def test_mean_free_and_real(self, kind):
        st, _ = make_initial_data(InitialDataSpec(kind, 1e-2, seed=3), self.grid, DecayParams())
        u = st.stack()
        assert np.all(u[:, 0, 0, 0] == 0)
        assert np.all(u[:, self.grid.nyquist_mask] == 0)
        back = sp.fft(sp.ifft(u, self.grid), self.grid)
        assert np.abs(back - u).max() < 1e-12 * np.abs(u).max()

    def test_gaussian_blocks_match_radial_integrals(self):
        st, rep = make_initial_data(InitialDataSpec("gaussian", 1.0, 1.0), self.grid, DecayParams())
        for j in range(-3, 2):
            lo, hi = 0.75 * 2.0 ** j, 8 / 3 * 2.0 ** j
            dens = lambda r: sp.phi(np.array([r * 2.0 ** -j]))[0] ** 2 * math.exp(-r * r) * 4 * math.pi * r * r
            exact = math.sqrt(scipy.integrate.quad(dens, lo, hi, limit=200)[0] / (2 * math.pi) ** 3)
            got = block_lp_norms(st.a, 2, [j])[0]
            assert abs(got / exact - 1) < 0.05
        assert math.isfinite(rep["low_B-s1_2inf"]) and rep["argmax_j"] <= -2

    @pytest.mark.parametrize("s1", [1.5, 1.0])
    def test_power_profile_slope(self, s1):
        g = sp.GridSpec(3, 32, 64.0)
        st, _ = make_initial_data(InitialDataSpec("power", 1.0, seed=0), g, DecayParams(s1=s1))
        js = np.arange(-4, 0)
        b = sum(block_lp_norms(f, 2, js) for f in st.fields().values())
        slope = np.polyfit(js, np.log2(b), 1)[0]
        assert abs(slope / s1 - 1) < 0.1

    def test_seed_determinism(self):
        a, _ = make_initial_data(InitialDataSpec("power", seed=5), self.grid, DecayParams())
        b, _ = make_initial_data(InitialDataSpec("power", seed=5), self.grid, DecayParams())
        c, _ = make_initial_data(InitialDataSpec("power", seed=6), self.grid, DecayParams())
        assert np.array_equal(a.stack(), b.stack()) and not np.array_equal(a.stack(), c.stack())

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            make_initial_data(InitialDataSpec(), sp.GridSpec(2, 16, 4.0), DecayParams())

    @pytest.mark.parametrize("kw", [dict(kind="box"), dict(amplitude=-1.0), dict(width=0.0)])
    def test_spec_invalid(self, kw):
        with pytest.raises(ValueError):
            InitialDataSpec(**kw)


class TestRadial:
    def test_rates(self):
        times = np.array([100.0, 1000.0])
        s = [0.0, 2.5]
        v = radial_linear_decay(P11, times, s)
        rates = np.log(v[:, 1] / v[:, 0]) / np.log(bracket(1000.0) / bracket(100.0))
        for si, r in zip(s, rates):
            assert abs(r + (1.5 + si) / 2) < 0.07

    def test_amplitude_linear(self):
        t = np.array([1.0, 5.0])
        a = radial_linear_decay(P11, t, [0.0], InitialDataSpec("gaussian", 1.0, 1.0))
        b = radial_linear_decay(P11, t, [0.0], InitialDataSpec("gaussian", 3.0, 1.0))
        assert np.allclose(b, 3 * a, rtol=1e-13)

    def test_initial_value_matches_quadrature(self):
        # at t = 0 every block is an explicit radial integral; a and theta contribute 1, upsilon contributes 1
        v = radial_linear_decay(P11, [0.0], [0.0])[0, 0]
        total = 0.0
        for j in range(-30, 1):
            lo, hi = 0.75 * 2.0 ** j, 8 / 3 * 2.0 ** j
            dens = lambda r: sp.phi(np.array([r * 2.0 ** -j]))[0] ** 2 * math.exp(-r * r) * 4 * math.pi * r * r
            total += 3 * math.sqrt(scipy.integrate.quad(dens, lo, hi, limit=200)[0] / (2 * math.pi) ** 3)
        assert math.isclose(v, total, rel_tol=1e-5)


def synthetic_record(times, js, fn, ps=(2.0,)):
    comps = ("a", "upsilon", "theta", "grad_upsilon")
    shape = (len(times), len(js))
    vals = {(c, p): np.array([[fn(t, j) for j in js] for t in times]).reshape(shape) for c in comps for p in ps}
    return BlockNormRecord(np.asarray(times, float), np.asarray(js), vals)


class TestFunctionals:
    def test_zero_record(self):
        rec = synthetic_record([0.0, 1.0, 2.0], np.arange(-3, 3), lambda t, j: 0.0)
        assert compute_Dp(rec, DecayParams())["total"] == 0
        assert compute_Xp(rec, DecayParams())["total"] == 0

    def test_empty_record(self):
        rec = synthetic_record([], np.arange(-3, 3), lambda t, j: 0.0)
        assert compute_Dp(rec, DecayParams())["total"] == 0

    def test_components(self):
        rec = synthetic_record([0.0, 1.0], np.arange(-2, 2), lambda t, j: 1.0)
        dp = compute_Dp(rec, DecayParams())
        assert set(dp["components"]) == {"low", "high_a", "high_upsilon", "high_theta", "high_grad_upsilon_theta"}
        xp = compute_Xp(rec, DecayParams())
        assert len(xp["components"]) == 8
        assert math.isclose(xp["total"], sum(xp["components"].values()))

    def test_missing_norms(self):
        rec = BlockNormRecord(np.array([0.0]), np.arange(2), {("a", 2.0): np.ones((1, 2))})
        with pytest.raises(KeyError, match="upsilon@p=2"):
            compute_Dp(rec, DecayParams())
        with pytest.raises(KeyError, match="theta@p=2"):
            compute_Xp(rec, DecayParams())

    def test_homogeneity(self):
        f = lambda t, j: math.exp(-t * 4.0 ** j) * 2.0 ** (1.5 * j)
        r1 = synthetic_record(np.linspace(0, 10, 30), np.arange(-4, 3), f)
        r2 = synthetic_record(np.linspace(0, 10, 30), np.arange(-4, 3), lambda t, j: 2 * f(t, j))
        for fn in (compute_Dp, compute_Xp):
            a, b = fn(r1, DecayParams()), fn(r2, DecayParams())
            assert math.isclose(b["total"], 2 * a["total"], rel_tol=1e-12)

    def test_linear_run_stable_and_convergent(self, unit_gas):
        g = sp.GridSpec(3, 16, 16.0)
        dp = DecayParams()
        st, _ = make_initial_data(InitialDataSpec("gaussian", 1e-2), g, dp)
        out = {}
        for T in (30.0, 60.0):
            res = integrate(st, SolverConfig(t_end=T, nonlinear=False), *unit_gas)
            out[T] = (compute_Dp(res.record, dp), compute_Xp(res.record, dp))
        for k, v in out[30.0][0]["components"].items():
            assert math.isfinite(v) and abs(out[60.0][0]["components"][k] / v - 1) < 1e-3, k
        assert abs(out[60.0][1]["total"] / out[30.0][1]["total"] - 1) < 0.01


class TestFits:
    def test_exact_power(self):
        t = np.geomspace(1, 100, 20)
        f = fit_decay(t, bracket(t) ** -0.75, (1, 100))
        assert math.isclose(f.exponent, -0.75, abs_tol=1e-12) and math.isclose(f.r2, 1.0, abs_tol=1e-12)
        assert f.n_points == 20 and f.window == (1, 100)

    def test_constant(self):
        t = np.linspace(1, 10, 10)
        f = fit_decay(t, np.full(10, 3.0))
        assert abs(f.exponent) < 1e-12

    def test_heat_kernel_gaussian(self):
        # ||exp(t Delta) u0||_L2 for a 3-d Gaussian is proportional to (1 + 2t)^(-3/4)
        t = np.geomspace(100, 1000, 12)
        f = fit_decay(t, (1 + 2 * t) ** -0.75, (100, 1000))
        assert abs(f.exponent + 0.75) < 0.01

    def test_errors(self):
        t = np.linspace(1, 10, 10)
        with pytest.raises(ValueError, match="positive"):
            fit_decay(t, -np.ones(10))
        with pytest.raises(ValueError, match="at least 6"):
            fit_decay(t, np.ones(10), (1, 3))
        with pytest.raises(ValueError):
            fit_decay(t, np.ones(10), (5, 5))

    def test_exponential(self):
        t = np.linspace(0, 10, 20)
        assert math.isclose(fit_exponential(t, 2 * np.exp(-0.3 * t)).exponent, 0.3, rel_tol=1e-12)

    def test_saturation_time(self):
        assert saturation_time(sp.GridSpec(3, 64, 64.0), P11) == pytest.approx((64 / (2 * math.pi)) ** 2 / 0.48208,
                                                                               rel=1e-4)


class TestReports:
    def test_norm_id(self):
        assert norm_id(0.0, 2.0, 1.0, "low") == "B0_21_low"
        assert norm_id(-1.49, 2, 1, "high") == "B-1.49_21_high"

    def test_series_table(self):
        rec = synthetic_record([0.0, 1.0], np.arange(-2, 2), lambda t, j: 1.0 + t)
        tab = series_table(rec, DecayParams(j0=0))
        assert len(tab) == 15
        assert np.allclose(tab["B0_21_low"], 3 * 3 * np.array([1.0, 2.0]))
        # high blocks start at j0 - 1, so block -1 counts on both sides
        assert np.allclose(tab["B0_21_high"], 3 * 3 * np.array([1.0, 2.0]))
        assert np.allclose(tab["B1_21_full"], 3 * (0.25 + 0.5 + 1 + 2) * np.array([1.0, 2.0]))

    def test_series_csv(self, tmp_path):
        t = np.array([0.0, 0.1, 0.125])
        tab = {"B0_21_low": np.array([1.0, 1 / 3, 2e-300])}
        write_series_csv(tmp_path / "s.csv", t, tab)
        tt, v = read_series_csv(tmp_path / "s.csv", "B0_21_low")
        assert np.array_equal(tt, t) and np.array_equal(v, tab["B0_21_low"])
        with pytest.raises(ValueError, match="no column"):
            read_series_csv(tmp_path / "s.csv", "B1_21_low")

    def test_dump_json(self):
        text = dump_json({"b": np.float64(1 / 3), "a": [np.int64(2), float("nan")], "c": np.arange(2)})
        data = json.loads(text)
        assert list(data) == ["a", "b", "c"] and data["a"] == [2, "nan"] and data["b"] == 1 / 3


CONFIG = """
[grid]
d = {d}
n = 16
box_len = 16.0
[solver]
t_end = 12.0
nonlinear = {nl}
[fit]
window = [2.0, 10.0]
"""


class TestRunExperiment:
    def test_outputs(self, tmp_path):
        cfg = load_config(text=CONFIG.format(d=3, nl="false"))
        res = run_experiment(cfg, out_dir=str(tmp_path))
        for name in ("blocks.csv", "series.csv", "fits.json", "functionals.json"):
            assert (tmp_path / name).exists()
        fits = json.loads((tmp_path / "fits.json").read_text())["fits"]
        assert {f["norm_id"] for f in fits} == {norm_id(s, 2, 1, "low") for s in DecayParams().s_grid}
        assert all(set(f) >= {"norm_id", "window", "exponent", "r2", "theory_exponent"} for f in fits)
        func = json.loads((tmp_path / "functionals.json").read_text())
        assert set(func) >= {"Dp", "Xp", "initial_data"}
        assert res.functionals["Dp"]["total"] > 0

    def test_byte_identical_reruns(self, tmp_path):
        cfg = load_config(text=CONFIG.format(d=3, nl="true"))
        run_experiment(cfg, out_dir=str(tmp_path / "a"))
        run_experiment(cfg, out_dir=str(tmp_path / "b"))
        for name in ("blocks.csv", "series.csv", "fits.json", "functionals.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_tiny_nonlinearity_keeps_exponents(self, tmp_path):
        out = {}
        for nl in ("false", "true"):
            res = run_experiment(load_config(text=CONFIG.format(d=3, nl=nl)), out_dir=str(tmp_path / nl))
            out[nl] = {f["norm_id"]: f["exponent"] for f in res.fits}
        for k in out["false"]:
            assert abs(out["false"][k] - out["true"][k]) < 0.05

    def test_two_dimensional_smoke(self, tmp_path):
        res = run_experiment(load_config(text=CONFIG.format(d=2, nl="true")), out_dir=str(tmp_path))
        assert res.functionals == {} and res.fits == []
        assert (tmp_path / "blocks.csv").exists()

    def test_plots(self, tmp_path):
        pytest.importorskip("matplotlib")
        cfg = load_config(text=CONFIG.format(d=3, nl="false"))
        run_experiment(cfg, out_dir=str(tmp_path / "a"), plots=True)
        run_experiment(cfg, out_dir=str(tmp_path / "b"), plots=True)
        svgs = sorted(p.name for p in (tmp_path / "a" / "plots").iterdir())
        assert "B0_21_low.svg" in svgs
        assert (tmp_path / "a/plots/B0_21_low.svg").read_bytes() == (tmp_path / "b/plots/B0_21_low.svg").read_bytes()
