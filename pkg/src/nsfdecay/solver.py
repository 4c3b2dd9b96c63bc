"""Integrating-factor (Lawson) Runge-Kutta time stepping on the periodic box."""

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .besov import BlockNormRecord
from .linear import LinearPropagator
from .nsf import VACUUM_FLOOR, NonlinearTerms, VacuumError
from .state import State

log = logging.getLogger(__name__)

SCHEMES = ("IF-RK2", "IF-RK4")
RECORD_COMPONENTS = ("a", "upsilon", "theta", "grad_a", "grad_upsilon", "w")


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class RecordTimes:
    """Geometric sampling ``t0 * q**m`` (plus ``t = 0``)."""

    t0: float = 0.1
    q: float = 1.25

    def __post_init__(self):
        if not (self.t0 > 0 and self.q > 1):
            raise ValueError("record times need t0 > 0 and q > 1")

    def up_to(self, t_end):
        out = [0.0]
        m = 0
        while True:
            t = self.t0 * self.q ** m
            if t > t_end * (1 + 1e-12):
                break
            out.append(t)
            m += 1
        return np.array(out)


@dataclass(frozen=True)
class SolverConfig:
    dt: float = None
    t_end: float = 1.0
    scheme: str = "IF-RK2"
    record_times: RecordTimes = field(default_factory=RecordTimes)
    cfl_safety: float = 0.5
    nonlinear: bool = True
    record_p: tuple = (2.0,)
    vacuum_floor: float = VACUUM_FLOOR

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0 < self.cfl_safety < 1:
            raise ValueError(f"cfl_safety must lie in (0, 1), got {self.cfl_safety}")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")

    def step_size(self, grid, vmax):
        bound = self.cfl_safety * grid.h / max(1.0, vmax)
        return bound if self.dt is None else min(self.dt, bound)


class Stepper:
    """Lawson stepping of ``U' = L U + N(U)`` on stacked coefficient arrays."""

    def __init__(self, grid, dp, table=None, scheme="IF-RK2", nonlinear=True,
                 vacuum_floor=VACUUM_FLOOR, backend=None):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        self.grid = grid
        self.scheme = scheme
        self.prop = LinearPropagator(grid, dp, backend)
        self.nl = NonlinearTerms(grid, table, dp, vacuum_floor) if nonlinear else None
        self.n_rhs = 0

    def _N(self, u):
        self.n_rhs += 1
        return self.nl(u)

    def step(self, u, h):
        E = self.prop.apply_array
        if self.nl is None:
            return E(u, h)
        if self.scheme == "IF-RK2":
            k1 = self._N(u)
            k2 = self._N(E(u + h * k1, h))
            return E(u + 0.5 * h * k1, h) + 0.5 * h * k2
        k1 = self._N(u)
        k2 = self._N(E(u + 0.5 * h * k1, 0.5 * h))
        uh = E(u, 0.5 * h)
        k3 = self._N(uh + 0.5 * h * k2)
        k4 = self._N(E(uh, 0.5 * h) + h * E(k3, 0.5 * h))
        return E(u + h / 6.0 * k1, h) + E(h / 3.0 * (k2 + k3), 0.5 * h) + h / 6.0 * k4


def step(state, dt, dp, table=None, scheme="IF-RK2", nonlinear=True):
    """Advance ``state`` by one step of size ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    st = Stepper(state.grid, dp, table, scheme, nonlinear and table is not None)
    u = st.step(state.stack(), dt)
    _check_finite(u, state.t + dt, 1)
    return State.from_stack(state.grid, u, state.t + dt)


def _check_finite(u, t, n_steps):
    if not np.all(np.isfinite(u)):
        bad = int((~np.isfinite(u)).sum())
        raise SolverError(f"non-finite coefficients at t={t:.6g} after {n_steps} steps "
                          f"({bad} bad entries); reduce dt or amplitude")


# -- recording ----------------------------------------------------------------

def _record_fields(grid, u):
    """Stacked spectral arrays for each recorded component."""
    d = grid.d
    a, v, th = u[:1], u[1:d + 1], u[d + 1:]
    ik = 1j * grid.xi
    r2 = grid.rho_dir ** 2
    inv = np.zeros_like(r2)
    np.divide(1.0, r2, out=inv, where=r2 > 0)
    div_v = (ik * v).sum(axis=0)
    return {
        "a": a,
        "upsilon": v,
        "theta": th,
        "grad_a": ik * a,
        "grad_upsilon": (ik[None, :] * v[:, None]).reshape((d * d,) + grid.shape),
        "w": ik * inv * (a[0] - div_v),
    }


def block_norm_table(grid, u, ps, js, components=RECORD_COMPONENTS):
    """``{(component, p): array over js}`` of block ``L^p`` norms of a stacked state."""
    fields_ = _record_fields(grid, u)
    out = {}
    for comp in components:
        c = fields_[comp]
        power = (np.abs(c) ** 2).sum(axis=0)
        for p in ps:
            p = float(p)
            vals = np.empty(len(js))
            for i, j in enumerate(js):
                sym = sp.block_symbol(grid, int(j))
                if p == 2.0:
                    vals[i] = math.sqrt(float((sym ** 2 * power).sum()) / grid.volume)
                else:
                    x = sp.ifft(c * sym, grid)
                    mag = np.sqrt((x ** 2).sum(axis=0))
                    if math.isinf(p):
                        vals[i] = float(mag.max())
                    else:
                        vals[i] = float((grid.h ** grid.d * (mag ** p).sum()) ** (1.0 / p))
            out[(comp, p)] = vals
    return out


def _aux_sample(grid, u):
    d = grid.d
    x = sp.ifft(u, grid)
    energy = (np.abs(u) ** 2).sum(axis=0)
    total = float(energy.sum())
    upper = float(energy[~grid.dealias_mask].sum())
    return {
        "max_speed": float(np.sqrt((x[1:d + 1] ** 2).sum(axis=0)).max()),
        "min_density": 1.0 + float(x[0].min()),
        "upper_third_energy": upper / total if total > 0 else 0.0,
    }


@dataclass
class IntegrationResult:
    final: State
    record: BlockNormRecord
    aux: dict
    steps: int
    dt: float


def integrate(state0, cfg, dp, table=None, observers=(), backend=None):
    """Run to ``cfg.t_end``, sampling block norms at the geometric record times.

    ``observers`` are called as ``obs(state)`` at every record time.
    """
    grid = state0.grid
    nonlinear = cfg.nonlinear and table is not None
    stepper = Stepper(grid, dp, table, cfg.scheme, nonlinear, cfg.vacuum_floor, backend)
    j_min, j_max = sp.block_range(grid)
    js = np.arange(j_min, j_max + 1)
    ps = sorted({float(p) for p in cfg.record_p} | {2.0})
    times = cfg.record_times.up_to(cfg.t_end)
    t_start = state0.t
    u = state0.stack()
    if state0.min_density() < cfg.vacuum_floor:
        raise VacuumError(f"initial min(1 + a) = {state0.min_density():.4g} below guard {cfg.vacuum_floor}")

    rows = {}
    aux = {"t": [], "max_speed": [], "min_density": [], "upper_third_energy": []}
    t = 0.0
    n_steps = 0
    dt_used = None
    for t_rec in times:
        if t_rec > t:
            vmax = _aux_sample(grid, u)["max_speed"] if nonlinear else 0.0
            dt = cfg.step_size(grid, vmax)
            dt_used = dt if dt_used is None else min(dt_used, dt)
            m = max(1, math.ceil((t_rec - t) / dt - 1e-9))
            h = (t_rec - t) / m
            for _ in range(m):
                u = stepper.step(u, h)
                n_steps += 1
                if not nonlinear:
                    continue
                _check_finite(u, t_start + t, n_steps)
            _check_finite(u, t_start + t_rec, n_steps)
            t = t_rec
        for key, vals in block_norm_table(grid, u, ps, js).items():
            rows.setdefault(key, []).append(vals)
        sample = _aux_sample(grid, u)
        aux["t"].append(t_start + t)
        for k, v in sample.items():
            aux[k].append(v)
        if nonlinear and sample["min_density"] < cfg.vacuum_floor:
            raise VacuumError(f"min(1 + a) = {sample['min_density']:.4g} at t={t_start + t:.6g}")
        if sample["upper_third_energy"] > 1e-8:
            log.info("upper-third spectral energy %.3g at t=%.4g", sample["upper_third_energy"], t)
        for obs in observers:
            obs(State.from_stack(grid, u, t_start + t))

    if cfg.t_end > t:
        vmax = _aux_sample(grid, u)["max_speed"] if nonlinear else 0.0
        dt = cfg.step_size(grid, vmax)
        m = max(1, math.ceil((cfg.t_end - t) / dt - 1e-9))
        h = (cfg.t_end - t) / m
        for _ in range(m):
            u = stepper.step(u, h)
            n_steps += 1
        _check_finite(u, t_start + cfg.t_end, n_steps)
        t = cfg.t_end

    record = BlockNormRecord(t_start + times, js, {k: np.array(v) for k, v in rows.items()})
    final = State.from_stack(grid, u, t_start + t)
    return IntegrationResult(final, record, aux, n_steps, dt_used or 0.0)


# -- checkpoints ------------------------------------------------------------------

def write_checkpoint(state, path, params=None):
    """Raw little-endian complex128 coefficients plus a ``<path>.json`` sidecar."""
    u = np.ascontiguousarray(state.stack(), dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(u.tobytes(order="C"))
    meta = {"grid": state.grid.as_dict(), "params": params or {}, "t": float(state.t),
            "layout": {"dtype": "<c16", "shape": list(u.shape), "order": "C",
                       "components": ["a"] + [f"upsilon_{i + 1}" for i in range(state.grid.d)] + ["theta"]}}
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def read_checkpoint(path):
    """Inverse of :func:`write_checkpoint`; returns ``(state, sidecar dict)``."""
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    g = meta["grid"]
    grid = sp.GridSpec(int(g["d"]), int(g["n"]), float(g["box_len"]))
    shape = (grid.d + 2,) + grid.shape
    raw = np.fromfile(path, dtype="<c16")
    if raw.size != int(np.prod(shape)):
        raise ValueError(f"{path}: expected {int(np.prod(shape))} coefficients, found {raw.size}")
    return State.from_stack(grid, raw.reshape(shape).astype(complex), float(meta["t"])), meta
