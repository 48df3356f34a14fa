"""Splitting a total power budget between the RF and FSO links.

``low_snr_rule`` is the closed-form low-SNR choice (all power on one link),
``uniform_split`` the high-SNR recommendation, and ``grid_optimize`` a
numeric search over the split ratio for an arbitrary objective. Two
deterministic outage objectives are provided: the CLT quadrature and an
exact evaluation by numeric convolution of the FSO log-gain density.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .channels import FsoTurbulence, CompositeExponential, pdf
from .clt import cdf_clt, moments_numeric
from .harq import HarqConfig, PowerSplit

__all__ = [
    "NumericError",
    "AllocationResult",
    "uniform_split",
    "low_snr_rule",
    "low_snr_outage",
    "grid_optimize",
    "clt_outage_objective",
    "outage_exact",
    "exact_outage_objective",
]


class NumericError(ArithmeticError):
    """An objective or integral produced a non-finite value."""


@dataclass(frozen=True)
class AllocationResult:
    split: PowerSplit
    objective: float
    method: str

    def __post_init__(self):
        if self.method not in ("uniform", "low_snr_rule", "grid"):
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def ratio(self) -> float:
        """Share of the budget given to the RF link."""
        return self.split.p_rf / self.split.total


def uniform_split(P: float) -> PowerSplit:
    if not P > 0:
        raise ValueError("P must be > 0")
    return PowerSplit(P / 2.0, P / 2.0)


def low_snr_rule(P: float, R: float, M: int, mu_fso: float) -> PowerSplit:
    """All power to RF when R >= M P mu_fso (ties go to RF), else all to FSO."""
    if not (P > 0 and R > 0 and mu_fso > 0) or M < 1:
        raise ValueError("P, R, mu_fso must be > 0 and M >= 1")
    return PowerSplit(P, 0.0) if R >= M * P * mu_fso else PowerSplit(0.0, P)


def low_snr_outage(split: PowerSplit, P: float, R: float, M: int, mu_fso: float) -> float:
    """Low-SNR outage 1 - exp(-(R/M - P_FSO mu_fso)/P_RF), FSO averaged to its mean.

    ``P`` is accepted for symmetry with :func:`low_snr_rule`; the split
    carries the powers.
    """
    need = R / M - split.p_fso * mu_fso
    if split.p_rf == 0:
        return 0.0 if need <= 0 else 1.0
    return float(min(1.0, max(0.0, -math.expm1(-max(0.0, need) / split.p_rf))))


def grid_optimize(P: float, objective: Callable[[PowerSplit], float], grid_points: int = 101,
                  caps: Optional[tuple[float, float]] = None, workers: int = 1) -> AllocationResult:
    """Minimize ``objective`` over splits of ``P`` by grid search plus refinement.

    The RF share runs over ``grid_points`` uniform knots in [0, 1] (so both
    single-link splits and the uniform split are always candidates when
    ``grid_points`` is odd; the uniform split is added otherwise). The best
    knot is refined by a bounded scalar search on its neighbouring cells.
    ``caps = (max_rf, max_fso)`` restricts the feasible shares.
    """
    if not P > 0:
        raise ValueError("P must be > 0")
    if grid_points < 3:
        raise ValueError("grid_points must be >= 3")
    lo_r, hi_r = 0.0, 1.0
    if caps is not None:
        max_rf, max_fso = caps
        hi_r = min(1.0, max_rf / P)
        lo_r = max(0.0, 1.0 - max_fso / P)
        if lo_r > hi_r:
            raise ValueError("power caps leave no feasible split")
    ratios = np.linspace(lo_r, hi_r, grid_points)
    if lo_r <= 0.5 <= hi_r and not np.any(np.isclose(ratios, 0.5, rtol=0, atol=1e-15)):
        ratios = np.sort(np.append(ratios, 0.5))

    def evaluate(r: float) -> float:
        r = float(r)
        val = float(objective(PowerSplit(P * r, P * (1.0 - r))))
        if not math.isfinite(val):
            raise NumericError(f"objective returned {val} at RF share {r}")
        return val

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = np.array(list(pool.map(evaluate, ratios)))
    else:
        values = np.array([evaluate(r) for r in ratios])
    i = int(np.argmin(values))
    best_r, best_v = float(ratios[i]), float(values[i])
    a, b = float(ratios[max(i - 1, 0)]), float(ratios[min(i + 1, len(ratios) - 1)])
    if b > a:
        res = optimize.minimize_scalar(evaluate, bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-6})
        if res.fun < best_v:
            best_r, best_v = float(res.x), float(res.fun)
    return AllocationResult(PowerSplit(P * best_r, P * (1.0 - best_r)), best_v, "grid")


def clt_outage_objective(cfg: HarqConfig, fso: FsoTurbulence) -> Callable[[PowerSplit], float]:
    """Outage Pr(W_M <= R/M) from the CLT quadrature, Rayleigh RF."""
    M, N = cfg.max_rounds_M, cfg.fso_realizations_N

    def obj(pw: PowerSplit) -> float:
        mom = moments_numeric(fso, pw.p_fso, cfg.detection_c).scaled(cfg.psi)
        return cdf_clt(cfg.rate_R / M, M, N, mom, pw.p_rf)

    return obj


def _trapezoid_convolve(a: np.ndarray, b: np.ndarray, h: float) -> np.ndarray:
    """(a * b)(t_n) by the trapezoid rule on [0, t_n], first len(a) knots."""
    n = a.size
    out = np.convolve(a, b)[:n]
    out -= 0.5 * (a[0] * b + b[0] * a)
    out[0] = 0.0
    return np.maximum(out * h, 0.0)


def _truncated_convolution_power(f: np.ndarray, k: int, h: float) -> np.ndarray:
    # density of the sum of k i.i.d. copies, kept on the first len(f) knots
    res = None
    base = f
    while k:
        if k & 1:
            res = base if res is None else _trapezoid_convolve(res, base, h)
        k >>= 1
        if k:
            base = _trapezoid_convolve(base, base, h)
    return res


def outage_exact(cfg: HarqConfig, pw: PowerSplit, fso: FsoTurbulence, step: float = 0.01) -> float:
    """Outage Pr(W_M <= R/M) with Rayleigh RF, without the Gaussian surrogate.

    The density of T = log(1 + c P_FSO G) is tabulated with spacing ``step``
    and convolved M N times, keeping only sums small enough to matter. All
    terms are positive, so the deep lower tail keeps its relative accuracy.
    """
    if isinstance(fso, CompositeExponential):
        raise TypeError("per-packet random rates couple the FSO terms; use Monte Carlo")
    M, N = cfg.max_rounds_M, cfg.fso_realizations_N
    K = M * N
    u = cfg.rate_R / M
    cp = cfg.detection_c * pw.p_fso
    if cp == 0:
        return -math.expm1(-math.expm1(u) / pw.p_rf)
    s_max = K * u / cfg.psi
    t = np.arange(0.0, s_max + step / 2, step)
    x = np.expm1(t) / cp
    f = np.asarray(pdf(fso, x), dtype=float) * np.exp(t) / cp
    dens = _truncated_convolution_power(f, K, step)
    slack = u - cfg.psi * t / K
    if pw.p_rf > 0:
        rf = -np.expm1(-np.expm1(slack) / pw.p_rf)
    else:
        rf = np.ones_like(t)
    val = float(np.trapezoid(dens * rf, t))
    if not math.isfinite(val):
        raise NumericError("non-finite outage from convolution")
    return min(1.0, max(0.0, val))


def exact_outage_objective(cfg: HarqConfig, fso: FsoTurbulence, step: float = 0.01) -> Callable[[PowerSplit], float]:
    def obj(pw: PowerSplit) -> float:
        return outage_exact(cfg, pw, fso, step)

    return obj
