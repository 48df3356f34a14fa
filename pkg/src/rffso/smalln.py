"""Bounds on Pr(W_m <= u) for small N with Gamma-Gamma turbulence.

When only a few FSO realizations are averaged the Gaussian surrogate is
poor. Two bounds replace it:

* an upper bound from (1 + gm(x))^n <= prod(1 + x_i), which needs the CDF
  of the product Q of the m*N Gamma-Gamma gains (:func:`product_cdf`), and
* a lower bound from Jensen's inequality, which needs the law of their sum
  B; that sum is approximated by a single Gamma-Gamma law
  (:func:`sum_pdf`, :func:`fit_varrho`).

The RF link is Rayleigh throughout.
"""
from __future__ import annotations

import math
import os
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate, optimize
from scipy import special as sc
from scipy.interpolate import PchipInterpolator

from .channels import RngStream, _gg_pdf, _log_kve
from .harq import HarqConfig, PowerSplit

__all__ = [
    "UnsupportedRegimeError",
    "SumGGParams",
    "product_cdf",
    "sum_pdf",
    "sum_cdf",
    "fit_varrho",
    "upper_bound_prob",
    "lower_bound_prob",
    "high_snr_lower",
    "MAX_MN",
]

MAX_MN = 6
_TABLE_VERSION = 1
_GRID_STEP = 0.01
_Y_LO, _Y_HI = -60.0, 8.0


class UnsupportedRegimeError(ValueError):
    """Requested m*N is beyond what the product-CDF table supports."""


@dataclass(frozen=True)
class SumGGParams:
    """Gamma-Gamma law used for the normalized sum B/(mN)."""

    sigma_mN: float
    varsigma_mN: float
    varrho_mN: float
    tau: float
    upsilon: float

    def __post_init__(self):
        if not (self.sigma_mN > 0 and self.varsigma_mN > 0):
            raise ValueError("sigma_mN and varsigma_mN must be > 0")
        if self.varrho_mN < 0:
            raise ValueError("varrho_mN must be >= 0")

    @classmethod
    def build(cls, mN: int, a: float, b: float, varrho: float = 0.0) -> "SumGGParams":
        ups, tau = max(a, b), min(a, b)
        return cls(mN * ups + varrho, mN * tau, varrho, tau, ups)


# ------------------------------------------------------------ product CDF

def _log_gg_density_of_log(a: float, b: float, y: np.ndarray) -> np.ndarray:
    """log density of log G for G ~ Gamma-Gamma(a, b)."""
    nu = abs(a - b)
    z = 2.0 * np.sqrt(a * b * np.exp(y))
    logc = math.log(2.0) + 0.5 * (a + b) * math.log(a * b) - sc.gammaln(a) - sc.gammaln(b)
    return logc + 0.5 * (a + b) * y + _log_kve(nu, z) - z


def _build_table(mN: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """(log x knots, log CDF) for the product of mN Gamma-Gamma gains.

    The density of log Q is the mN-fold convolution of the density of
    log G. The convolution is a direct sum of positive terms, so values far
    in the tails keep their relative accuracy.
    """
    h = _GRID_STEP
    y1 = np.arange(_Y_LO, _Y_HI + h / 2, h)
    base = np.exp(_log_gg_density_of_log(a, b, y1))
    dens = base
    y0 = y1[0]
    for _ in range(mN - 1):
        dens = np.convolve(dens, base) * h
        y0 += y1[0]
    y = y0 + h * np.arange(dens.size)
    # trapezoid cumulative plus the power-law mass left of the first knot
    head_slope = min(a, b)
    cum = np.concatenate(([dens[0] / head_slope], dens[0] / head_slope + np.cumsum(0.5 * h * (dens[1:] + dens[:-1]))))
    cum /= cum[-1]
    keep = cum > 1e-300
    return y[keep], np.log(cum[keep])


_TABLES: dict[tuple, tuple] = {}
_TABLE_LOCK = threading.Lock()


def _cache_dir() -> Path:
    return Path(os.environ.get("RFFSO_CACHE_DIR", Path.home() / ".cache" / "rffso"))


def _table(mN: int, a: float, b: float):
    key = (mN, round(a, 12), round(b, 12))
    tab = _TABLES.get(key)
    if tab is not None:
        return tab
    with _TABLE_LOCK:
        tab = _TABLES.get(key)
        if tab is not None:
            return tab
        path = _cache_dir() / f"prodcdf_v{_TABLE_VERSION}_mN{mN}_a{a:.10g}_b{b:.10g}.npz"
        y = logf = None
        if path.exists():
            try:
                with np.load(path) as z:
                    if int(z["version"]) == _TABLE_VERSION:
                        y, logf = z["y"], z["logf"]
            except (OSError, KeyError, ValueError):
                y = None
        if y is None:
            y, logf = _build_table(mN, a, b)
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(".tmp.npz")
                np.savez(tmp, version=_TABLE_VERSION, y=y, logf=logf)
                os.replace(tmp, path)
            except OSError:
                pass  # read-only location; the in-memory table still works
        slope = (logf[1] - logf[0]) / (y[1] - y[0])
        tab = (y, logf, PchipInterpolator(y, logf, extrapolate=False), slope)
        _TABLES[key] = tab
        return tab


def product_cdf(x, mN: int, a: float, b: float):
    """CDF of the product of ``mN`` independent unit-mean Gamma-Gamma gains.

    Tabulated once per (mN, a, b) on a fine log grid and kept in memory and
    on disk (``$RFFSO_CACHE_DIR``, default ``~/.cache/rffso``).
    """
    if int(mN) != mN or mN < 1:
        raise ValueError("mN must be an integer >= 1")
    if mN > MAX_MN:
        raise UnsupportedRegimeError(
            f"mN={mN} exceeds {MAX_MN}; use the CLT analysis in rffso.clt for large m*N")
    xa = np.asarray(x, dtype=float)
    if np.any(np.isnan(xa)):
        raise ValueError("x must not be NaN")
    y, logf, interp, slope = _table(mN, a, b)
    out = np.zeros_like(xa)
    pos = xa > 0
    ly = np.log(xa[pos])
    val = np.empty_like(ly)
    lo, hi = ly < y[0], ly > y[-1]
    mid = ~(lo | hi)
    val[mid] = np.exp(interp(ly[mid]))
    val[lo] = np.exp(logf[0] + slope * (ly[lo] - y[0]))
    val[hi] = 1.0
    out[pos] = np.minimum(val, 1.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- sum law

def sum_pdf(x, params: SumGGParams, mN: int):
    """Gamma-Gamma approximation of the density of the sum of mN gains."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa <= 0):
        raise ValueError("sum_pdf requires x > 0")
    out = _gg_pdf(params.sigma_mN, params.varsigma_mN, xa / mN) / mN
    return float(out) if out.ndim == 0 else out


_LAGUERRE_CACHE: dict = {}


def _gg_cdf_vec(s1: float, s2: float, y: np.ndarray, nodes: int = 160) -> np.ndarray:
    """CDF of a unit-mean Gamma-Gamma(s1, s2) law at many points.

    Writes G = X Z with X ~ Gamma(s1, 1/s1) and Z = T/s2, T ~ Gamma(s2), and
    averages P(X <= y/Z) over T with generalized Gauss-Laguerre nodes.
    """
    key = (nodes, s2)
    if key not in _LAGUERRE_CACHE:
        t, w = sc.roots_genlaguerre(nodes, s2 - 1.0)
        _LAGUERRE_CACHE[key] = (t, w / math.exp(sc.gammaln(s2)))
    t, w = _LAGUERRE_CACHE[key]
    y = np.maximum(np.asarray(y, dtype=float), 0.0)
    return sc.gammainc(s1, s1 * s2 * y[..., None] / t) @ w


def sum_cdf(x, params: SumGGParams, mN: int):
    """CDF matching :func:`sum_pdf`."""
    out = np.clip(_gg_cdf_vec(params.sigma_mN, params.varsigma_mN, np.asarray(x, float) / mN), 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def _ks(params: SumGGParams, mN: int, qs: np.ndarray, levels: np.ndarray) -> float:
    model = sum_cdf(qs * mN, params, mN)
    return float(np.max(np.abs(model - levels)))


def fit_varrho(mN: int, a: float, b: float, samples: int = 1_000_000,
               rng: RngStream = RngStream(seed=20240607)) -> SumGGParams:
    """Adjustment term of the sum approximation, fitted by KS distance.

    The target is the empirical law of the mean of mN Gamma-Gamma gains
    (``samples`` draws, fixed seed); the search covers [0, 4 mN max(a, b)]
    and the result is never worse than varrho = 0. For mN = 1 the law is
    exact and varrho is 0.
    """
    if int(mN) != mN or mN < 1:
        raise ValueError("mN must be an integer >= 1")
    if mN == 1:
        return SumGGParams.build(1, a, b, 0.0)
    gen = rng.generator()
    draws = (gen.standard_gamma(a, (samples, mN)) / a * gen.standard_gamma(b, (samples, mN)) / b).mean(axis=1)
    levels = np.linspace(0.0005, 0.9995, 1999)
    qs = np.quantile(draws, levels)

    def obj(r):
        return _ks(SumGGParams.build(mN, a, b, max(r, 0.0)), mN, qs, levels)

    upper = 4.0 * mN * max(a, b)
    res = optimize.minimize_scalar(obj, bounds=(0.0, upper), method="bounded", options={"xatol": 1e-4})
    best = float(res.x) if obj(res.x) < obj(0.0) else 0.0
    return SumGGParams.build(mN, a, b, best)


_FIT_CACHE: dict = {}


def _fitted(mN: int, a: float, b: float) -> SumGGParams:
    key = (mN, a, b)
    if key not in _FIT_CACHE:
        _FIT_CACHE[key] = fit_varrho(mN, a, b)
    return _FIT_CACHE[key]


# ------------------------------------------------------------------ bounds

def _check(cfg: HarqConfig, m: int):
    if int(m) != m or m < 1:
        raise ValueError("m must be an integer >= 1")
    return m * cfg.fso_realizations_N


def upper_bound_prob(u: float, m: int, cfg: HarqConfig, pw: PowerSplit, a: float, b: float) -> float:
    """Upper bound on Pr(W_m <= u) from the product of the FSO gains."""
    mN = _check(cfg, m)
    if u <= 0:
        return 0.0
    cp = cfg.detection_c * pw.p_fso
    if pw.p_rf == 0:
        arg = (math.expm1(u / cfg.psi) / cp) ** mN if cp > 0 else math.inf
        return 1.0 if arg == math.inf else float(product_cdf(arg, mN, a, b))

    def integrand(g):
        left = (u - math.log1p(pw.p_rf * g)) / cfg.psi
        if left <= 0:
            return 0.0
        if cp == 0:
            return math.exp(-g)
        return math.exp(-g) * float(product_cdf((math.expm1(left) / cp) ** mN, mN, a, b))

    hi = min(math.expm1(u) / pw.p_rf, 745.0)
    val, _ = integrate.quad(integrand, 0.0, hi, limit=400, epsabs=1e-13, epsrel=1e-9)
    return min(1.0, max(0.0, val))


def _jensen_integral(u: float, cfg: HarqConfig, pw: PowerSplit, log_dens_t) -> float:
    # integrate over the FSO term t = log(1 + cP B/mN), RF CDF in closed form
    tmax = u / cfg.psi

    def integrand(t):
        ld = log_dens_t(t)
        if ld == -math.inf:
            return 0.0
        slack = u - cfg.psi * t
        rf = 1.0 if pw.p_rf == 0 else -math.expm1(-math.expm1(slack) / pw.p_rf)
        return math.exp(ld) * rf

    val, _ = integrate.quad(integrand, 0.0, tmax, limit=400, epsabs=1e-14, epsrel=1e-9)
    return min(1.0, max(0.0, val))


def lower_bound_prob(u: float, m: int, cfg: HarqConfig, pw: PowerSplit, a: float, b: float,
                     params: SumGGParams | None = None) -> float:
    """Lower bound on Pr(W_m <= u) from Jensen's inequality on the FSO sum."""
    mN = _check(cfg, m)
    if u <= 0:
        return 0.0
    params = params or _fitted(mN, a, b)
    cp = cfg.detection_c * pw.p_fso
    if cp == 0:
        return -math.expm1(-math.expm1(u) / pw.p_rf)
    s1, s2 = params.sigma_mN, params.varsigma_mN
    logc = math.log(2.0) + 0.5 * (s1 + s2) * math.log(s1 * s2) - sc.gammaln(s1) - sc.gammaln(s2)
    nu = abs(s1 - s2)

    def log_dens_t(t):
        if t <= 0:
            return -math.inf
        y = math.expm1(t) / cp  # value of B/mN
        z = 2.0 * math.sqrt(s1 * s2 * y)
        lk = float(_log_kve(nu, z))
        if not math.isfinite(lk):
            return -math.inf
        return t - math.log(cp) + logc + (0.5 * (s1 + s2) - 1.0) * math.log(y) + lk - z

    return _jensen_integral(u, cfg, pw, log_dens_t)


def high_snr_lower(u: float, m: int, cfg: HarqConfig, pw: PowerSplit, a: float, b: float) -> float:
    """:func:`lower_bound_prob` with the small-argument power law of the sum density.

    Meant for P_FSO of 20 dB and above, where only small sums matter.
    """
    mN = _check(cfg, m)
    if u <= 0:
        return 0.0
    cp = cfg.detection_c * pw.p_fso
    if cp == 0:
        return -math.expm1(-math.expm1(u) / pw.p_rf)
    ups, tau = max(a, b), min(a, b)
    if ups == tau:
        ups = tau + 1e-9
    logk = mN * (sc.gammaln(ups - tau) + tau * math.log(ups * tau) - sc.gammaln(ups))
    shape = mN * tau
    # f_B(x) ~ K x^(shape-1)/Gamma(shape) at x = mN (e^t - 1)/cP
    scale = mN / cp

    def log_dens_t(t):
        if t <= 0:
            return -math.inf
        return (logk - sc.gammaln(shape) + shape * math.log(scale)
                + (shape - 1.0) * math.log(math.expm1(t)) + t)

    return _jensen_integral(u, cfg, pw, log_dens_t)
