"""Decay experiments: initial data, the time-weighted functionals, exponent fits and reports."""

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.special

from . import __version__
from . import spectral as sp
from .besov import SplitConfig, sup_time_norm, tilde_sup_norm, time_l1_norm
from .linear import constructive_rate, mode_semigroup
from .state import State

log = logging.getLogger(__name__)

LOW_COMPONENTS = ("a", "upsilon", "theta")


def bracket(t):
    """``<t> = sqrt(1 + t^2)``."""
    return np.sqrt(1.0 + np.asarray(t, dtype=float) ** 2)


@dataclass(frozen=True)
class DecayParams:
    d: int = 3
    s1: float = 1.5
    p: float = 2.0
    eps: float = 0.01
    j0: int = 0
    s_grid: tuple = None
    strong_low: bool = False

    def __post_init__(self):
        d, p = self.d, self.p
        if not (2 <= p < d):
            raise ValueError(f"p must satisfy 2 <= p < d = {d}, got {p}")
        if d > 2 and p > 2 * d / (d - 2):
            raise ValueError(f"p must not exceed 2d/(d-2) = {2 * d / (d - 2)}, got {p}")
        lo, hi = max(0.0, 2 - d / 2), self.s0
        if not (lo - 1e-12 <= self.s1 <= hi + 1e-12):
            raise ValueError(f"s1 must lie in [{lo}, {hi}] for d={d}, p={p}; got {self.s1}")
        if self.eps < 0 or (self.eps == 0 and not self.strong_low):
            raise ValueError("eps must be positive (eps = 0 needs strong_low = true)")
        if self.eps >= 0.5:
            raise ValueError(f"eps should be small, got {self.eps}")
        if self.s_grid is None:
            object.__setattr__(self, "s_grid", self.default_s_grid())
        else:
            sg = tuple(sorted(float(s) for s in self.s_grid))
            bad = [s for s in sg if not (self.s_min - 1e-12 <= s <= d / 2 + 1 + 1e-12)]
            if bad:
                raise ValueError(f"s_grid values {bad} outside [{self.s_min}, {d / 2 + 1}]")
            object.__setattr__(self, "s_grid", sg)

    @property
    def s0(self):
        return 2 * self.d / self.p - self.d / 2

    @property
    def s_min(self):
        return self.eps - self.s1

    @property
    def alpha(self):
        return self.s1 + self.d / 2 + 0.5 - self.eps

    def default_s_grid(self):
        d = self.d
        cand = [self.s_min, 0.0, 1.0, d / 2, d / 2 + 1]
        return tuple(sorted({round(s, 12) for s in cand if self.s_min - 1e-12 <= s <= d / 2 + 1}))

    def theory_exponent(self, s):
        return -(self.s1 + s) / 2

    def as_dict(self):
        return {"d": self.d, "s1": self.s1, "p": self.p, "eps": self.eps, "j0": self.j0,
                "s_grid": list(self.s_grid), "alpha": self.alpha, "s0": self.s0,
                "strong_low": self.strong_low}


@dataclass(frozen=True)
class InitialDataSpec:
    kind: str = "gaussian"
    amplitude: float = 1e-2
    width: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian", "power"):
            raise ValueError(f"initial data kind must be 'gaussian' or 'power', got {self.kind!r}")
        if self.amplitude < 0:
            raise ValueError("amplitude must be nonnegative")
        if not self.width > 0:
            raise ValueError("width must be positive")


def _direction(d):
    e = np.arange(1, d + 1, dtype=float)
    return e / np.linalg.norm(e)


def profile(rho, spec, s1, d):
    """Radial amplitude ``|U0_hat|`` divided by the amplitude."""
    rho = np.asarray(rho, dtype=float)
    if spec.kind == "gaussian":
        return np.exp(-rho ** 2 * spec.width ** 2 / 2)
    sigma = s1 - d / 2
    out = np.zeros_like(rho)
    np.power(rho, sigma, out=out, where=rho > 0)
    return out * sp.psi(rho)


def make_initial_data(spec, grid, dp=None):
    """Mean-free data ``(a0, upsilon0, theta0)`` with empty Nyquist planes, and a report of its norms.

    Without decay parameters (two-dimensional smoke runs) ``s1 = d/2`` and ``p = 2`` are used.
    """
    if dp is not None and dp.d != grid.d:
        raise ValueError(f"decay parameters are for d={dp.d}, grid has d={grid.d}")
    s1, p, j0 = (grid.d / 2, 2.0, 0) if dp is None else (dp.s1, dp.p, dp.j0)
    g = profile(grid.rho, spec, s1, grid.d) * spec.amplitude
    g[(0,) * grid.d] = 0.0
    d = grid.d
    u = np.zeros((d + 2,) + grid.shape, dtype=complex)
    if spec.kind == "gaussian":
        e = _direction(d)
        u[0] = g
        u[1:d + 1] = e.reshape((d,) + (1,) * d) * g
        u[d + 1] = g
    else:
        rng = np.random.default_rng(spec.seed)
        noise = sp.fft(rng.standard_normal((d + 2,) + grid.shape), grid)
        mag = np.abs(noise)
        phase = np.zeros_like(noise)
        np.divide(noise, mag, out=phase, where=mag > 0)
        u = phase * g
        u[(slice(None),) + (0,) * d] = 0.0
    # the semigroup cannot damp Nyquist modes, so they would sit in the top blocks forever
    u[:, grid.nyquist_mask] = 0.0
    state = State.from_stack(grid, u, 0.0)
    return state, initial_data_report(state, s1, p, j0)


def initial_data_report(state, s1, p, j0=0):
    """Low ``B^{-s1}_{2,inf}`` norm and the high-frequency smallness norms of the data."""
    from .solver import block_norm_table

    grid = state.grid
    j_min, j_max = sp.block_range(grid)
    js = np.arange(j_min, j_max + 1)
    split = SplitConfig(j0)
    tab = block_norm_table(grid, state.stack(), sorted({2.0, float(p)}), js, LOW_COMPONENTS)
    low = split.low(js)
    high = split.high(js)
    per_j = sum(tab[(c, 2.0)] for c in LOW_COMPONENTS)
    weighted = 2.0 ** (-s1 * js[low]) * per_j[low]
    dd, p = grid.d, float(p)
    hp = {c: tab[(c, p)][high] for c in LOW_COMPONENTS}
    jh = js[high]
    return {
        "low_B-s1_2inf": float(weighted.max()) if weighted.size else 0.0,
        "argmax_j": int(js[low][int(np.argmax(weighted))]) if weighted.size else None,
        "low_B(d/2-1)_21": float((2.0 ** ((dd / 2 - 1) * js[low]) * per_j[low]).sum()),
        "high_a_B(d/p)_p1": float((2.0 ** (dd / p * jh) * hp["a"]).sum()),
        "high_upsilon_B(d/p-1)_p1": float((2.0 ** ((dd / p - 1) * jh) * hp["upsilon"]).sum()),
        "high_theta_B(d/p-2)_p1": float((2.0 ** ((dd / p - 2) * jh) * hp["theta"]).sum()),
        "min_density": state.min_density(),
    }


# -- grid-free radial linear decay (d = 3) -------------------------------------------

@lru_cache(maxsize=64)
def _gauss_legendre(n):
    n = 64 * math.ceil(n / 64)
    return scipy.special.roots_legendre(n)


def radial_linear_decay(params, times, s_values, spec=InitialDataSpec("gaussian", 1.0, 1.0),
                        s1=1.5, j_min=-30, j0=0):
    """Low-frequency ``B^s_{2,1}`` norms of ``E(t) U0`` on the whole of R^3.

    ``U0`` has radial amplitude ``profile`` in each of ``a``, ``theta`` and a
    fixed-direction ``upsilon``. Every block norm is a radial Gauss-Legendre
    integral of the exact mode-wise solution, so no box or lattice enters.
    Returns an array ``(len(s_values), len(times))`` (sum over ``a, upsilon, theta``).
    """
    times = np.asarray(times, dtype=float)
    s_values = np.asarray(s_values, dtype=float)
    js = np.arange(j_min, j0 + 1)
    out = np.zeros((len(s_values), len(times)))
    for it, t in enumerate(times):
        nodes, weights, block = [], [], []
        for ib, j in enumerate(js):
            lo, hi = 0.75 * 2.0 ** j, 8.0 / 3.0 * 2.0 ** j
            width = hi - lo
            # enough nodes to resolve the acoustic oscillation cos(2 rho t)
            x, w = _gauss_legendre(int(t * width) + 40)
            nodes.append(lo + 0.5 * width * (1 + x))
            weights.append(0.5 * width * w)
            block.append(np.full(len(x), ib))
        r = np.concatenate(nodes)
        wt = np.concatenate(weights)
        ib = np.concatenate(block)
        M, heat = mode_semigroup(r, t, params)
        g = profile(r, spec, s1, 3) * spec.amplitude
        f = sp.phi(r * 2.0 ** (-js[ib])) ** 2 * g ** 2 * r ** 2 * wt / (2 * np.pi) ** 3
        # angular integrals: 4 pi for isotropic terms, 4 pi/3 for cos^2, 8 pi/3 for sin^2
        dens = []
        for row in range(3):
            dens.append(4 * np.pi * (M[:, row, 0] + M[:, row, 2]) ** 2 + 4 * np.pi / 3 * M[:, row, 1] ** 2)
        dens[1] = dens[1] + 8 * np.pi / 3 * heat ** 2
        blocks = sum(np.sqrt(np.bincount(ib, weights=f * dn, minlength=len(js))) for dn in dens)
        out[:, it] = (2.0 ** (np.outer(s_values, js)) * blocks).sum(axis=1)
    return out


# -- functionals ------------------------------------------------------------------

def _require(rec, needs):
    missing = [f"{c}@p={p:g}" for c, p in needs if not rec.has(c, p)]
    if missing:
        raise KeyError("record is missing norms: " + ", ".join(missing))


def _empty(rec):
    return len(rec.times) == 0


def compute_Dp(rec, dp):
    """Components of the time-weighted decay functional and their sum."""
    d, p = dp.d, float(dp.p)
    _require(rec, [(c, 2.0) for c in LOW_COMPONENTS]
             + [(c, p) for c in ("a", "upsilon", "theta", "grad_upsilon")])
    split = SplitConfig(dp.j0)
    if _empty(rec):
        comps = {k: 0.0 for k in ("low", "high_a", "high_upsilon", "high_theta", "high_grad_upsilon_theta")}
        return {"components": comps, "total": 0.0, "argmax_s": None}
    low_by_s = {}
    for s in dp.s_grid:
        low_by_s[s] = sup_time_norm(rec, LOW_COMPONENTS, s, 2.0,
                                    lambda t, s=s: bracket(t) ** ((dp.s1 + s) / 2), "low", split)
    s_star = max(low_by_s, key=low_by_s.get)
    wa = lambda t: bracket(t) ** dp.alpha
    tau = lambda t: np.asarray(t, dtype=float) ** dp.alpha
    comps = {
        "low": low_by_s[s_star],
        "high_a": tilde_sup_norm(rec, "a", d / p, p, wa, "high", split),
        "high_upsilon": tilde_sup_norm(rec, "upsilon", d / p - 1, p, wa, "high", split),
        "high_theta": tilde_sup_norm(rec, "theta", d / p - 2, p, wa, "high", split),
        "high_grad_upsilon_theta": tilde_sup_norm(rec, ("grad_upsilon", "theta"), d / p, p, tau, "high", split),
    }
    return {"components": comps, "total": float(sum(comps.values())), "argmax_s": s_star,
            "low_by_s": {format(s, "g"): v for s, v in low_by_s.items()}}


def compute_Xp(rec, dp):
    """Components of the global-existence functional and their sum."""
    d, p = dp.d, float(dp.p)
    _require(rec, [(c, 2.0) for c in LOW_COMPONENTS] + [(c, p) for c in LOW_COMPONENTS])
    split = SplitConfig(dp.j0)
    names = ("low_sup", "low_l1", "high_a_sup", "high_a_l1", "high_upsilon_sup", "high_upsilon_l1",
             "high_theta_sup", "high_theta_l1")
    if len(rec.times) < 2:
        comps = {k: 0.0 for k in names}
        if len(rec.times) == 1:
            comps["low_sup"] = tilde_sup_norm(rec, LOW_COMPONENTS, d / 2 - 1, 2.0, None, "low", split)
            comps["high_a_sup"] = tilde_sup_norm(rec, "a", d / p, p, None, "high", split)
            comps["high_upsilon_sup"] = tilde_sup_norm(rec, "upsilon", d / p - 1, p, None, "high", split)
            comps["high_theta_sup"] = tilde_sup_norm(rec, "theta", d / p - 2, p, None, "high", split)
        return {"components": comps, "total": float(sum(comps.values()))}
    comps = {
        "low_sup": tilde_sup_norm(rec, LOW_COMPONENTS, d / 2 - 1, 2.0, None, "low", split),
        "low_l1": time_l1_norm(rec, LOW_COMPONENTS, d / 2 + 1, 2.0, "low", split),
        "high_a_sup": tilde_sup_norm(rec, "a", d / p, p, None, "high", split),
        "high_a_l1": time_l1_norm(rec, "a", d / p, p, "high", split),
        "high_upsilon_sup": tilde_sup_norm(rec, "upsilon", d / p - 1, p, None, "high", split),
        "high_upsilon_l1": time_l1_norm(rec, "upsilon", d / p + 1, p, "high", split),
        "high_theta_sup": tilde_sup_norm(rec, "theta", d / p - 2, p, None, "high", split),
        "high_theta_l1": time_l1_norm(rec, "theta", d / p, p, "high", split),
    }
    return {"components": comps, "total": float(sum(comps.values()))}


# -- fitting ------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    exponent: float
    intercept: float
    r2: float
    window: tuple
    n_points: int

    def as_dict(self):
        return {"exponent": self.exponent, "intercept": self.intercept, "r2": self.r2,
                "window": list(self.window), "n_points": self.n_points}


def _window_select(t, v, window):
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if t.shape != v.shape:
        raise ValueError("times and values differ in length")
    ta, tb = (float(window[0]), float(window[1])) if window is not None else (float(t.min()), float(t.max()))
    if not ta < tb:
        raise ValueError(f"fit window needs t_a < t_b, got [{ta}, {tb}]")
    keep = (t >= ta * (1 - 1e-12)) & (t <= tb * (1 + 1e-12))
    if keep.sum() < 6:
        raise ValueError(f"fit window [{ta}, {tb}] holds {int(keep.sum())} samples; at least 6 needed")
    if np.any(v[keep] <= 0) or not np.all(np.isfinite(v[keep])):
        raise ValueError("decay fit needs positive finite values")
    return t[keep], v[keep], (ta, tb)


def _linfit(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + icpt)
    ss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss == 0 else 1.0 - float((resid ** 2).sum()) / ss
    return float(slope), float(icpt), r2


def fit_decay(times, values, window=None):
    """Least-squares slope of ``log value`` against ``log <t>``."""
    t, v, win = _window_select(times, values, window)
    slope, icpt, r2 = _linfit(np.log(bracket(t)), np.log(v))
    return DecayFit(slope, icpt, r2, win, len(t))


def fit_exponential(times, values, window=None):
    """Rate ``c`` of a log-linear fit ``value ~ exp(-c t)``."""
    t, v, win = _window_select(times, values, window)
    slope, icpt, r2 = _linfit(t, np.log(v))
    return DecayFit(-slope, icpt, r2, win, len(t))


def saturation_time(grid, params):
    """Time ``(L / 2 pi)^2 / c0`` after which the box's lowest mode dominates."""
    c0 = constructive_rate(params).c0
    return (grid.box_len / (2 * np.pi)) ** 2 / c0


# -- series and reports --------------------------------------------------------------

def norm_id(s, p, r, part):
    return f"B{format(s, 'g')}_{format(p, 'g')}{format(r, 'g')}_{part}"


def series_table(rec, dp, components=LOW_COMPONENTS):
    """``{norm_id: values over rec.times}`` for every ``s`` in the grid, both ``p`` and each part."""
    split = SplitConfig(dp.j0)
    out = {}
    ps = sorted({2.0, float(dp.p)})
    for p in ps:
        if not all(rec.has(c, p) for c in components):
            continue
        for s in dp.s_grid:
            w = 2.0 ** (s * rec.js)
            per = sum(rec.get(c, p) for c in components) * w
            for part in ("low", "high", "full"):
                mask = (split.low(rec.js) if part == "low" else
                        split.high(rec.js) if part == "high" else np.ones(len(rec.js), bool))
                out[norm_id(s, p, 1, part)] = per[:, mask].sum(axis=1)
    return out


def _fmt(x):
    return format(float(x), ".17g")


def write_series_csv(path, times, table):
    keys = list(table)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + keys)
        for i, t in enumerate(times):
            w.writerow([_fmt(t)] + [_fmt(table[k][i]) for k in keys])


def read_series_csv(path, col):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "t" not in reader.fieldnames:
            raise ValueError(f"{path}: CSV needs a 't' column")
        if col not in reader.fieldnames:
            raise ValueError(f"{path}: no column {col!r}; available: {', '.join(reader.fieldnames[1:])}")
        rows = [(float(r["t"]), float(r[col])) for r in reader]
    return np.array([r[0] for r in rows]), np.array([r[1] for r in rows])


def dump_json(obj, path=None):
    """Deterministic JSON with floats at 17 significant digits."""
    text = json.dumps(_round_floats(obj), indent=2, sort_keys=True) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _round_floats(obj):
    if isinstance(obj, float) or isinstance(obj, np.floating):
        x = float(obj)
        if not math.isfinite(x):
            return str(x)
        return float(format(x, ".17g"))
    if isinstance(obj, dict):
        return {str(k): _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round_floats(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


@dataclass
class ExperimentResult:
    record: object
    series: dict
    fits: list
    functionals: dict
    final: object = None
    aux: dict = field(default_factory=dict)


def run_experiment(cfg, out_dir=None, plots=None):
    """Run the configured evolution and write ``blocks.csv``, ``series.csv``, ``fits.json``, ``functionals.json``.

    ``cfg`` is a resolved config dict (see :mod:`nsfdecay.config`).
    """
    from .config import build_objects
    from .solver import integrate

    objs = build_objects(cfg)
    grid, dpar, table, decay, spec, scfg = (objs[k] for k in ("grid", "params", "table", "decay", "initial", "solver"))
    state0, report = make_initial_data(spec, grid, decay)
    res = integrate(state0, scfg, dpar, table if scfg.nonlinear else None)
    rec = res.record
    series = series_table(rec, decay) if decay is not None else {}
    t_sat = saturation_time(grid, dpar)
    window = tuple(cfg["fit"]["window"])
    fits = []
    for s in (decay.s_grid if decay is not None else ()):
        nid = norm_id(s, 2, 1, "low")
        entry = {"norm_id": nid, "window": list(window), "theory_exponent": decay.theory_exponent(s),
                 "saturation_time": t_sat, "window_crosses_saturation": bool(window[1] > t_sat)}
        try:
            f = fit_decay(rec.times, series[nid], window)
            entry.update(exponent=f.exponent, r2=f.r2, n_points=f.n_points)
        except ValueError as exc:
            entry.update(exponent=None, r2=None, error=str(exc))
        fits.append(entry)
    functionals = {"Dp": compute_Dp(rec, decay), "Xp": compute_Xp(rec, decay)} if decay is not None else {}
    result = ExperimentResult(rec, series, fits, functionals, res.final, res.aux)

    out_dir = out_dir or cfg["outputs"]["dir"]
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        meta = {"config": cfg, "version": __version__}
        rec.to_csv(os.path.join(out_dir, "blocks.csv"))
        write_series_csv(os.path.join(out_dir, "series.csv"), rec.times, series)
        dump_json({**meta, "fits": fits}, os.path.join(out_dir, "fits.json"))
        dump_json({**meta, **functionals, "initial_data": report,
                   "aux": {k: (min(v) if k == "min_density" else max(v)) for k, v in res.aux.items() if k != "t"},
                   "steps": res.steps, "dt": res.dt},
                  os.path.join(out_dir, "functionals.json"))
        if plots if plots is not None else cfg["outputs"].get("plots", False):
            from .plots import write_decay_plots
            write_decay_plots(os.path.join(out_dir, "plots"), rec.times, series, fits)
    return result
