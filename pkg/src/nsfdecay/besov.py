"""Homogeneous Besov norms, hybrid low/high norms and time-weighted block norms.

Every norm is assembled from per-block Lebesgue norms ``||Delta_j z||_{L^p}``,
summed over the grid-representable blocks (see :func:`spectral.block_range`).
Vector fields use the pointwise Euclidean norm inside ``L^p``. A tuple of
fields is normed by the sum of the component norms.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp


@dataclass(frozen=True)
class BesovParams:
    s: float
    p: float
    r: float = 1.0

    def __post_init__(self):
        if self.p < 1 or self.r < 1:
            raise ValueError(f"need p, r >= 1, got p={self.p}, r={self.r}")


@dataclass(frozen=True)
class SplitConfig:
    """Low/high threshold; low sums run over ``j <= j0``, high over ``j >= j0 - 1``."""

    j0: int = 0

    def low(self, js):
        return js <= self.j0

    def high(self, js):
        return js >= self.j0 - 1


def lp_norm(f, p):
    """``(h^d sum_x |f(x)|^p)^(1/p)``; grid max for ``p = inf``."""
    vals = f.values
    mag = np.sqrt((vals ** 2).sum(axis=0)) if vals.shape[0] > 1 else np.abs(vals[0])
    if math.isinf(p):
        return float(mag.max())
    return float((f.grid.h ** f.grid.d * (mag ** p).sum()) ** (1.0 / p))


def block_lp_norms(u, p, js=None):
    """``||Delta_j u||_{L^p}`` for each ``j`` in ``js`` (default: the grid's block range).

    ``p = 2`` goes through Parseval, anything else through an inverse transform.
    """
    grid = u.grid
    if js is None:
        j_min, j_max = sp.block_range(grid)
        js = np.arange(j_min, j_max + 1)
    js = np.asarray(js)
    out = np.empty(len(js))
    if p == 2:
        power = (np.abs(u.coeffs) ** 2).sum(axis=0)
        for i, j in enumerate(js):
            out[i] = math.sqrt(float((sp.block_symbol(grid, int(j)) ** 2 * power).sum()) / grid.volume)
        return out
    for i, j in enumerate(js):
        out[i] = lp_norm(sp.inverse_transform(sp.dyadic_block(u, int(j))), p)
    return out


def _lr(weighted, r):
    if len(weighted) == 0:
        return 0.0
    if math.isinf(r):
        return float(np.max(weighted))
    return float((weighted ** r).sum() ** (1.0 / r))


def _as_tuple(u):
    return u if isinstance(u, (tuple, list)) else (u,)


def besov_norm(u, bp, js=None):
    """``|| (2^{js} ||Delta_j u||_{L^p})_j ||_{l^r}`` over the representable blocks."""
    total = 0.0
    for f in _as_tuple(u):
        j_min, j_max = sp.block_range(f.grid)
        jj = np.arange(j_min, j_max + 1) if js is None else np.asarray(js)
        b = block_lp_norms(f, bp.p, jj)
        total += _lr(2.0 ** (bp.s * jj) * b, bp.r)
    return total


def restricted_besov_norm(u, bp, part, j0=0):
    """Low (``j <= j0``) or high (``j >= j0 - 1``) restricted Besov norm."""
    split = SplitConfig(j0)
    total = 0.0
    for f in _as_tuple(u):
        j_min, j_max = sp.block_range(f.grid)
        jj = np.arange(j_min, j_max + 1)
        jj = jj[split.low(jj) if part == "low" else split.high(jj)]
        total += besov_norm(f, bp, jj)
    return total


# -- time-sampled block norms -------------------------------------------------

CSV_HEADER = ["t", "component", "p", "j", "value"]


def _fmt(x):
    return format(float(x), ".17g")


def _p_key(p):
    return math.inf if (isinstance(p, str) and p.lower() in ("inf", "infinity")) else float(p)


@dataclass
class BlockNormRecord:
    """Per-block ``L^p`` norms sampled in time.

    ``values[(component, p)]`` is an array of shape ``(len(times), len(js))``.
    """

    times: np.ndarray
    js: np.ndarray
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.js = np.asarray(self.js, dtype=int)
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("record times must be strictly increasing")
        for key, v in self.values.items():
            v = np.asarray(v, dtype=float)
            if v.shape != (len(self.times), len(self.js)):
                raise ValueError(f"values for {key} have shape {v.shape}")
            if np.any(v < 0):
                raise ValueError(f"negative block norm for {key}")
            self.values[key] = v

    def get(self, component, p):
        key = (component, _p_key(p))
        if key not in self.values:
            raise KeyError(f"record has no norms for component {component!r} at p={p}")
        return self.values[key]

    def has(self, component, p):
        return (component, _p_key(p)) in self.values

    def components(self):
        return sorted({c for c, _ in self.values})

    def window(self, t_max):
        keep = self.times <= t_max * (1 + 1e-12)
        return BlockNormRecord(self.times[keep], self.js,
                               {k: v[keep] for k, v in self.values.items()})

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for (comp, p), v in sorted(self.values.items(), key=lambda kv: (kv[0][0], kv[0][1])):
                ptxt = "inf" if math.isinf(p) else _fmt(p)
                for it, t in enumerate(self.times):
                    for ij, j in enumerate(self.js):
                        w.writerow([_fmt(t), comp, ptxt, int(j), _fmt(v[it, ij])])

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != CSV_HEADER:
                raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}, got {','.join(header)}")
            for row in reader:
                rows.append((float(row[0]), row[1], _p_key(row[2]), int(row[3]), float(row[4])))
        times = np.array(sorted({r[0] for r in rows}))
        js = np.array(sorted({r[3] for r in rows}))
        ti = {t: i for i, t in enumerate(times)}
        ji = {j: i for i, j in enumerate(js)}
        values = {}
        for t, comp, p, j, val in rows:
            arr = values.setdefault((comp, p), np.zeros((len(times), len(js))))
            arr[ti[t], ji[j]] = val
        return cls(times, js, values)


def _block_mask(rec, part, split):
    if part == "low":
        return split.low(rec.js)
    if part == "high":
        return split.high(rec.js)
    return np.ones(len(rec.js), dtype=bool)


def tilde_sup_norm(rec, components, s, p, weight=None, part="full", split=SplitConfig()):
    """``sum_j 2^{js} sup_t weight(t) ||Delta_j z(t)||_{L^p}``, summed over components.

    ``weight`` maps an array of times to weights (default 1).
    """
    if len(rec.times) == 0:
        return 0.0
    w = np.ones_like(rec.times) if weight is None else np.asarray(weight(rec.times), dtype=float)
    mask = _block_mask(rec, part, split)
    total = 0.0
    for comp in _as_tuple(components):
        v = rec.get(comp, p)[:, mask]
        total += float((2.0 ** (s * rec.js[mask]) * (w[:, None] * v).max(axis=0)).sum())
    return total


def sup_time_norm(rec, components, s, p, weight=None, part="full", split=SplitConfig()):
    """``sup_t weight(t) sum_j 2^{js} ||Delta_j z(t)||_{L^p}`` (time sup outside the block sum)."""
    if len(rec.times) == 0:
        return 0.0
    w = np.ones_like(rec.times) if weight is None else np.asarray(weight(rec.times), dtype=float)
    mask = _block_mask(rec, part, split)
    per_t = np.zeros(len(rec.times))
    for comp in _as_tuple(components):
        v = rec.get(comp, p)[:, mask]
        per_t += (2.0 ** (s * rec.js[mask]) * v).sum(axis=1)
    return float((w * per_t).max())


def time_l1_norm(rec, components, s, p, part="full", split=SplitConfig()):
    """``sum_j 2^{js} int_0^T ||Delta_j z(t)||_{L^p} dt`` by the trapezoid rule on the record times."""
    if len(rec.times) < 2:
        raise ValueError("time L1 norm needs at least two samples")
    mask = _block_mask(rec, part, split)
    total = 0.0
    for comp in _as_tuple(components):
        v = rec.get(comp, p)[:, mask]
        integral = np.trapezoid(v, rec.times, axis=0) if hasattr(np, "trapezoid") else np.trapz(v, rec.times, axis=0)
        total += float((2.0 ** (s * rec.js[mask]) * integral).sum())
    return total


# -- inequality checks ----------------------------------------------------------

@dataclass(frozen=True)
class BernsteinResult:
    ratio: float
    """min over trials of ``(p-1) int |grad f|^2 |f|^{p-2} / (2^{2j} int |f|^p)``"""
    constant: float
    """the same with the ``(p-1)/p`` factor of the nonlinear Bernstein inequality"""
    identity_error: float
    """worst relative gap in ``-int Delta f |f|^{p-2} f = (p-1) int |grad f|^2 |f|^{p-2}``"""
    trials: int
    ratio_max: float = None
    """max over trials of the ratio"""


def annulus_field(grid, j, rng, comps=1):
    """Random real field with Fourier support in ``3 2^j / 4 <= |xi| <= 8 2^j / 3``."""
    noise = rng.standard_normal((comps,) + grid.shape)
    coeffs = sp.fft(noise, grid)
    band = (grid.rho >= 0.75 * 2.0 ** j) & (grid.rho <= 8.0 / 3.0 * 2.0 ** j)
    # drop Nyquist planes so the field is exactly real and the band symmetric
    band &= grid.rho_dir == grid.rho
    return sp.SpectralField(grid, coeffs * band)


def check_bernstein(j, p, trials, grid, rng=None):
    if not 1 < p < math.inf:
        raise ValueError("Bernstein check needs 1 < p < inf")
    rng = np.random.default_rng(rng)
    ratios, identity = [], 0.0
    used = 0
    for _ in range(trials):
        u = annulus_field(grid, j, rng)
        f = sp.inverse_transform(u).values[0]
        if not np.any(f):
            continue
        grad = sp.inverse_transform(sp.gradient(u)).values
        lap = sp.inverse_transform(sp.laplacian(u)).values[0]
        dv = grid.h ** grid.d
        absf = np.abs(f)
        weight = absf ** (p - 2)
        dissip = (p - 1) * dv * float(((grad ** 2).sum(axis=0) * weight).sum())
        lhs = -dv * float((lap * weight * f).sum())
        mass = dv * float((absf ** p).sum())
        ratios.append(dissip / (4.0 ** j * mass))
        identity = max(identity, abs(lhs - dissip) / abs(dissip))
        used += 1
    if not used:
        raise ValueError("all trial fields were degenerate")
    r = min(ratios)
    return BernsteinResult(r, r * p / (p - 1), identity, used, max(ratios))


def check_interpolation(u, sigma1, sigma2, theta, p):
    """Log-convexity ``||u||_{B^{th s2 + (1-th) s1}} <= ||u||_{B^{s1}}^{1-th} ||u||_{B^{s2}}^{th}`` with r = inf."""
    if sigma1 == sigma2 or not 0 < theta < 1:
        raise ValueError("need sigma1 != sigma2 and theta in (0, 1)")
    mid = besov_norm(u, BesovParams(theta * sigma2 + (1 - theta) * sigma1, p, math.inf))
    lo = besov_norm(u, BesovParams(sigma1, p, math.inf))
    hi = besov_norm(u, BesovParams(sigma2, p, math.inf))
    bound = lo ** (1 - theta) * hi ** theta
    return mid <= bound * (1 + 1e-12)


@dataclass(frozen=True)
class EmbeddingCheck:
    ratio: float
    c_emb: float
    holds: bool


def embedding_constant(grid, sigma, q, r):
    """Discrete Young constant ``max_j 2^{-j sigma} ||F^-1 phi_j||_{L^m}``, ``1 + 1/r = 1/m + 1/q``."""
    m_inv = 1.0 + 1.0 / r - 1.0 / q
    m = math.inf if m_inv == 0 else 1.0 / m_inv
    j_min, j_max = sp.block_range(grid)
    worst = 0.0
    for j in range(j_min, j_max + 1):
        kernel = sp.ifft(sp.block_symbol(grid, j)[None], grid)
        worst = max(worst, 2.0 ** (-j * sigma) * lp_norm(sp.PhysicalField(grid, kernel), m))
    return worst


def check_embedding(u, sigma, q, r=None, c_emb=None):
    """``||u||_{B^{-sigma}_{r,inf}} <= C ||u||_{L^q}`` with ``1/q - 1/r = sigma/d``.

    Returns the observed ratio and the constant used; by default the exact
    discrete Young constant of the grid's blocks, for which the inequality is a theorem.
    """
    d = u.grid.d
    if not (sigma > 0 and 1 <= q < 2):
        raise ValueError("need sigma > 0 and 1 <= q < 2")
    r_inv = 1.0 / q - sigma / d
    if r_inv < 0:
        raise ValueError(f"1/q - sigma/d = {r_inv} < 0: no admissible r")
    if r is not None and not math.isclose(0.0 if math.isinf(r) else 1.0 / r, r_inv, abs_tol=1e-12):
        raise ValueError(f"1/q - 1/r must equal sigma/d = {sigma / d}")
    r = math.inf if r_inv == 0 else 1.0 / r_inv
    if c_emb is None:
        c_emb = embedding_constant(u.grid, sigma, q, r)
    lhs = besov_norm(u, BesovParams(-sigma, r, math.inf))
    rhs = lp_norm(sp.inverse_transform(u), q)
    ratio = 0.0 if lhs == 0 else lhs / rhs
    return EmbeddingCheck(ratio, c_emb, lhs <= c_emb * rhs * (1 + 1e-12))
