"""Gaussian (CLT) treatment of the FSO contribution to the accumulated MI.

The FSO part of W_m is an average of m*N i.i.d. terms log(1 + c P G) and
is replaced by a Gaussian with mean ``mu`` and variance ``sigma2/(m N)``.
This module provides

* the per-term moments for exponential, log-normal and Gamma-Gamma
  turbulence, in closed form and by quadrature,
* the resulting CDF of W_m under Rayleigh RF fading (:func:`cdf_clt`),
  evaluated by adaptive quadrature, and
* closed-form approximations and bounds of that CDF (``lemma1_F`` ...
  ``lemma5_S``) together with the throughput/outage they imply.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import mpmath
import numpy as np
from scipy import integrate, optimize
from scipy import special as sc

from .channels import (
    CompositeExponential,
    Exponential,
    FsoTurbulence,
    GammaGamma,
    LogNormal,
    _gg_pdf,
    lognormal_rate_params,
)
from .specfun import (
    ConvergenceError,
    gamma_upper,
    gen_hypergeom,
    log_exp_integral_en,
    log_gamma_lower,
    log_gamma_upper_real,
    q_function,
)

__all__ = [
    "CltMoments",
    "Lemma3Epsilon",
    "AppendixXi",
    "moments_exponential",
    "moments_lognormal",
    "moments_gammagamma",
    "moments_numeric",
    "moments_for",
    "cdf_clt",
    "lemma1_F",
    "lemma1_F_second_order",
    "lemma2_V",
    "lemma3_T",
    "lemma4_R",
    "lemma5_S",
    "epsilon_tune",
    "metrics_from_cdf",
]

_SQRT2PI = math.sqrt(2.0 * math.pi)
_EULER = float(np.euler_gamma)


@dataclass(frozen=True)
class CltMoments:
    """Mean and variance (nats) of one FSO term log(1 + c P G)."""

    mu: float
    sigma2: float
    method: str = "numeric"
    reference: Optional["CltMoments"] = None

    def __post_init__(self):
        if self.mu < 0 or self.sigma2 < 0:
            raise ValueError("CLT moments must be non-negative")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    def scaled(self, psi: float) -> "CltMoments":
        """Moments of psi * log(1 + c P G)."""
        return replace(self, mu=psi * self.mu, sigma2=psi * psi * self.sigma2, reference=None)


@dataclass(frozen=True)
class Lemma3Epsilon:
    epsilon: float = 0.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


@dataclass(frozen=True)
class AppendixXi:
    xi: float
    i_max: int = 8

    def __post_init__(self):
        if not self.xi > 0:
            raise ValueError("xi must be > 0")
        if self.i_max < 0:
            raise ValueError("i_max must be >= 0")


def _quad(f, a, b, **kw):
    kw.setdefault("limit", 400)
    val, _ = integrate.quad(f, a, b, **kw)
    return val


def _from_raw(mu: float, rho2: float, method: str, reference=None) -> CltMoments:
    # rounding can leave a tiny negative variance for nearly deterministic gains
    return CltMoments(max(mu, 0.0), max(rho2 - mu * mu, 0.0), method, reference)


# ------------------------------------------------------------------ moments

def _e1_scaled(k: float) -> float:
    """e^k E_1(k) for k > 0."""
    if k < 50:
        return float(math.exp(k) * sc.exp1(k))
    return math.exp(log_exp_integral_en(1.0, k) + k)


def _ei_scaled(w: float) -> float:
    """e^-w Ei(w) for w > 0."""
    if w < 600:
        return float(sc.expi(w) * math.exp(-w))
    # asymptotic series; at this size the smallest term is far below rounding
    total, term, k = 0.0, 1.0 / w, 0
    while abs(term) > 1e-17 * abs(total) or k == 0:
        total += term
        k += 1
        term *= k / w
    return total


def moments_numeric(dist: FsoTurbulence, p_fso: float, c_det: float = 1.0) -> CltMoments:
    """Moments of log(1 + c P G) by adaptive quadrature over the gain law."""
    if p_fso < 0:
        raise ValueError("p_fso must be >= 0")
    if p_fso == 0:
        return CltMoments(0.0, 0.0, "numeric")
    cp = c_det * p_fso
    tol = dict(epsabs=0.0, epsrel=1e-11)
    if isinstance(dist, Exponential):
        s = cp / dist.lam
        # in v = log t the integrand is smooth whatever the size of s
        v_lo = math.log(1e-8 / max(s, 1.0)) - 20.0

        def ex(k):
            def g(v):
                t = math.exp(v)
                return math.exp(v - t) * math.log1p(s * t) ** k
            return _quad(g, v_lo, math.log(60.0), points=[-math.log(s), 0.0] if -math.log(s) > v_lo else [0.0],
                         epsabs=0.0, epsrel=1e-11) \
                + _quad(lambda t: math.exp(-t) * math.log1p(s * t) ** k, 60, np.inf, epsabs=1e-30, epsrel=1e-8)

        mu, rho2 = ex(1), ex(2)
    elif isinstance(dist, LogNormal):
        def g(z, k):
            return math.exp(-0.5 * z * z) / _SQRT2PI * math.log1p(cp * math.exp(dist.varpi + dist.delta * z)) ** k
        # the integrand peaks near z = 0 and where cP e^(varpi + delta z) ~ 1
        zc = -(math.log(cp) + dist.varpi) / dist.delta
        pts = sorted({0.0, min(max(zc, -30.0), 30.0)})
        mu = _quad(lambda z: g(z, 1), -40, 40, points=pts, **tol)
        rho2 = _quad(lambda z: g(z, 2), -40, 40, points=pts, **tol)
    elif isinstance(dist, GammaGamma):
        def h(x, k):
            return float(_gg_pdf(dist.a, dist.b, np.array([x]))[0]) * math.log1p(cp * x) ** k
        mu = _quad(lambda x: h(x, 1), 0, 1, **tol) + _quad(lambda x: h(x, 1), 1, np.inf, **tol)
        rho2 = _quad(lambda x: h(x, 2), 0, 1, **tol) + _quad(lambda x: h(x, 2), 1, np.inf, **tol)
    elif isinstance(dist, CompositeExponential):
        loc, sc_ = lognormal_rate_params(dist.delta, dist.normalization)
        z, w = np.polynomial.hermite_e.hermegauss(80)
        mu = rho2 = 0.0
        for zk, wk in zip(z, w):
            inner = moments_numeric(Exponential(math.exp(loc + sc_ * zk)), p_fso, c_det)
            mu += wk * inner.mu
            rho2 += wk * (inner.sigma2 + inner.mu ** 2)
        mu /= _SQRT2PI
        rho2 /= _SQRT2PI
    else:
        raise TypeError(f"unsupported distribution {dist!r}")
    return _from_raw(mu, rho2, "numeric")


def moments_exponential(lam: float, p_fso: float, c: float = 1.0) -> CltMoments:
    """Closed-form moments for exponential turbulence.

    mu = e^k E_1(k) with k = lam / (c P); the second moment uses
    2 e^k (gamma log k + log(k)^2 / 2 + gamma^2 / 2 + pi^2 / 12 - k 3F3(1,1,1; 2,2,2; -k)).
    The bracket is O(e^-k), so beyond k = 1 it is evaluated in extended
    precision, and beyond k = 200 the second moment comes from quadrature.
    """
    if not (lam > 0 and c > 0):
        raise ValueError("lam and c must be > 0")
    if p_fso <= 0:
        return CltMoments(0.0, 0.0, "closed")
    k = lam / (c * p_fso)
    mu = _e1_scaled(k)
    lk = math.log(k)
    if k <= 1.0:
        f = k * gen_hypergeom([1, 1, 1], [2, 2, 2], -k)
        rho2 = 2.0 * math.exp(k) * (_EULER * lk + 0.5 * lk * lk + 0.5 * _EULER ** 2 + math.pi ** 2 / 12 - f)
        method = "closed"
    elif k <= 200.0:
        # the bracket is O(e^-k), so it needs about k/ln(10) extra digits
        with mpmath.workdps(20 + int(k / math.log(10.0))):
            km = mpmath.mpf(k)
            lkm = mpmath.log(km)
            br = (mpmath.euler * lkm + lkm ** 2 / 2 + mpmath.euler ** 2 / 2 + mpmath.pi ** 2 / 12
                  - km * mpmath.hyper([1, 1, 1], [2, 2, 2], -km))
            rho2 = float(2 * mpmath.exp(km) * br)
        method = "closed"
    else:
        s = 1.0 / k
        rho2 = _quad(lambda t: math.exp(-t) * math.log1p(s * t) ** 2, 0, np.inf, epsabs=0.0, epsrel=1e-11)
        method = "closed+quad"
    if rho2 - mu * mu < -1e-9 * max(rho2, 1e-300):
        # cancellation ate the variance; quadrature is authoritative
        return replace(moments_numeric(Exponential(lam), p_fso, c), method="closed+quad")
    return _from_raw(mu, rho2, method)


def _lognormal_linearized(varpi: float, delta: float, p: float) -> tuple[float, float]:
    slope = -math.exp(-varpi) / (delta * _SQRT2PI)  # dQ/dx at the median, negative
    ew = math.exp(varpi)
    x1 = max(0.0, 0.5 / slope + ew)
    x2 = -0.5 / slope + ew
    l1 = math.log1p(p * x1)
    l2 = math.log1p(p * x2)
    a = 0.5 - slope * ew - slope / p
    mu = l1 + a * (l2 - l1) + slope * (x2 - x1)
    rho2 = l1 * l1 + (1.0 / p) * (
        a * p * (l2 * l2 - l1 * l1)
        - 2.0 * slope * p * (x2 - x1)
        + 2.0 * slope * ((1 + p * x2) * l2 - (1 + p * x1) * l1)
    )
    return mu, rho2


def moments_lognormal(varpi: float, delta: float, p_fso: float, c_det: float = 1.0) -> CltMoments:
    """Moments for log-normal turbulence via a piecewise-linear Q surrogate.

    The tail probability Q((log x - varpi)/delta) is replaced by the line
    through (e^varpi, 1/2) with the true slope there, clipped to [0, 1];
    both moments then integrate in closed form. The quadrature-exact moments
    are attached as ``reference``.
    """
    if not delta > 0:
        raise ValueError("delta must be > 0")
    if p_fso <= 0:
        return CltMoments(0.0, 0.0, "linearized")
    mu, rho2 = _lognormal_linearized(varpi, delta, c_det * p_fso)
    ref = moments_numeric(LogNormal(varpi, delta), p_fso, c_det)
    return _from_raw(mu, rho2, "linearized", ref)


# Gamma-Gamma: split the integral at xi. Below xi the Bessel K is replaced by
# its small-argument power law; above xi log(1+Px) ~ log(Px) and K by its
# large-argument asymptotic series, integrated term by term.

def _bessel_asym_coeffs(order: float, i_max: int) -> list[float]:
    alpha = [1.0]
    for j in range(1, i_max + 1):
        alpha.append(alpha[-1] * (4 * order * order - (2 * j - 1) ** 2))
    return alpha


def _log_moment_upper(s: float, x: float, power: int) -> float:
    """int_x^inf log(t)^power t^(s-1) e^-t dt for power in {0, 1, 2}."""
    if power == 0 and s > 0:
        return gamma_upper(s, x)
    if s > 0:
        try:
            lower_reg = sc.gammainc(s, x)
            g = math.gamma(s)
            lo = lower_reg * g
            lx = math.log(x)
            xs = x ** s
            f2 = gen_hypergeom([s, s], [s + 1, s + 1], -x)
            if power == 1:
                partial = lx * lo - xs / s ** 2 * f2
                return g * sc.digamma(s) - partial
            f3 = gen_hypergeom([s, s, s], [s + 1, s + 1, s + 1], -x)
            partial = lx * lx * lo - 2 * lx * xs / s ** 2 * f2 + 2 * xs / s ** 3 * f3
            return g * (sc.digamma(s) ** 2 + sc.polygamma(1, s)) - partial
        except ConvergenceError:
            pass
    return _quad(lambda t: math.log(t) ** power * t ** (s - 1) * math.exp(-t), x, np.inf,
                 epsabs=0.0, epsrel=1e-11)


def _gg_branches(a: float, b: float, p: float, xi: float, i_max: int, power: int) -> float:
    if a < b:
        a, b = b, a
    order = a - b
    pref_small = math.exp(b * math.log(a * b) + sc.gammaln(order) - sc.gammaln(a) - sc.gammaln(b))
    # small branch: int_0^xi log(1+Px)^power x^(b-1) dx
    if power == 1:
        try:
            small = xi ** b / (b * (b + 1)) * (
                (b + 1) * math.log1p(p * xi) - p * xi * gen_hypergeom([1, b + 1], [b + 2], -p * xi))
        except ConvergenceError:
            small = _quad(lambda x: math.log1p(p * x) * x ** (b - 1), 0, xi, epsabs=0.0, epsrel=1e-11)
    else:
        small = _quad(lambda x: math.log1p(p * x) ** 2 * x ** (b - 1), 0, xi, epsabs=0.0, epsrel=1e-11)

    pref_large = math.exp(0.5 * (a + b) * math.log(a * b) - sc.gammaln(a) - sc.gammaln(b)) \
        * math.sqrt(math.pi) / (a * b) ** 0.25
    v0 = 2.0 * math.sqrt(a * b * xi)
    L = math.log(p / (4 * a * b))
    alpha = _bessel_asym_coeffs(order, i_max)
    large = 0.0
    prev = math.inf
    for i in range(i_max + 1):
        coef = alpha[i] / (math.factorial(i) * 8 ** i * (4 * a * b) ** (0.5 * (a + b) - 0.25))
        size = abs(alpha[i] / (math.factorial(i) * (8 * v0) ** i))
        if i > 0 and size > prev:
            break  # asymptotic series: stop at the smallest term
        prev = size
        s = a + b - 0.5 - i
        g0 = _log_moment_upper(s, v0, 0)
        g1 = _log_moment_upper(s, v0, 1)
        if power == 1:
            term = 2.0 * (L * g0 + 2.0 * g1)
        else:
            g2 = _log_moment_upper(s, v0, 2)
            term = 2.0 * (L * L * g0 + 4.0 * L * g1 + 4.0 * g2)
        large += coef * term
    return pref_small * small + pref_large * large


def _xi_grid(cp: float) -> list[float]:
    return [k * 0.05 / cp for k in range(1, 21)]


def moments_gammagamma(a: float, b: float, p_fso: float, c_det: float = 1.0,
                       knobs: AppendixXi | None = None) -> CltMoments:
    """Moments for Gamma-Gamma turbulence from the split-integral expansion.

    ``knobs`` fixes the split point xi and the asymptotic-series length;
    without it xi is picked from a grid to best match the quadrature mean.
    The quadrature moments are attached as ``reference``.
    """
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be > 0")
    if p_fso <= 0:
        return CltMoments(0.0, 0.0, "expansion")
    if a == b:
        b = b + 1e-9
    cp = c_det * p_fso
    ref = moments_numeric(GammaGamma(a, b), p_fso, c_det)
    if knobs is None:
        best = None
        for xi in _xi_grid(cp):
            mu = _gg_branches(a, b, cp, xi, 8, 1)
            err = abs(mu - ref.mu)
            if best is None or err < best[0]:
                best = (err, xi)
        knobs = AppendixXi(best[1], 8)
    mu = _gg_branches(a, b, cp, knobs.xi, knobs.i_max, 1)
    rho2 = _gg_branches(a, b, cp, knobs.xi, knobs.i_max, 2)
    return _from_raw(mu, rho2, f"expansion(xi={knobs.xi:.6g})", ref)


def moments_for(dist: FsoTurbulence, p_fso: float, c_det: float = 1.0,
                method: str = "numeric") -> CltMoments:
    """Moments for ``dist`` by quadrature (``"numeric"``) or its closed form."""
    if method == "numeric" or isinstance(dist, CompositeExponential):
        return moments_numeric(dist, p_fso, c_det)
    if isinstance(dist, Exponential):
        return moments_exponential(dist.lam, p_fso, c_det)
    if isinstance(dist, LogNormal):
        return moments_lognormal(dist.varpi, dist.delta, p_fso, c_det)
    if isinstance(dist, GammaGamma):
        return moments_gammagamma(dist.a, dist.b, p_fso, c_det)
    raise TypeError(f"unsupported distribution {dist!r}")


# --------------------------------------------------------------- CDF of W_m

def _degenerate_cdf(u: float, mu: float, p_rf: float) -> float:
    # sigma -> 0: the FSO part equals mu exactly
    if u <= mu:
        return 0.0
    if p_rf == 0:
        return 1.0
    return -math.expm1(-math.expm1(u - mu) / p_rf)


def cdf_clt(u: float, m: int, N: int, mom: CltMoments, p_rf: float) -> float:
    """P(W_m <= u) with Rayleigh RF and the Gaussian FSO surrogate.

    Integrates exp(-x) Q(sqrt(mN)(log(1 + P_RF x) + mu - u)/sigma) over the
    RF gain x in [0, (e^u - 1)/P_RF], written in the variable
    l = log(1 + P_RF x) so the range is the finite interval [0, u].
    """
    if u <= 0:
        return 0.0
    mu, sigma = mom.mu, mom.sigma
    k = math.sqrt(m * N)
    if sigma == 0:
        return _degenerate_cdf(u, mu, p_rf)
    if p_rf == 0:
        return float(q_function(k * (mu - u) / sigma))

    def integrand(l):
        x = math.expm1(l) / p_rf
        if x > 745:
            return 0.0
        return math.exp(-x + l) / p_rf * q_function(k * (l + mu - u) / sigma)

    hi = min(u, math.log1p(745.0 * p_rf))
    centre = u - mu
    width = sigma / k
    pts = [v for v in (centre - 6 * width, centre, centre + 6 * width, math.log1p(p_rf)) if 0 < v < hi]
    val = _quad(integrand, 0.0, hi, points=sorted(pts) or None, epsabs=1e-12, epsrel=1e-10)
    return min(1.0, max(0.0, val))


def _exp_q_linear(alpha: float, x0: float, X: float) -> float:
    """int_0^X e^-x Q(alpha (x - x0)) dx for alpha > 0, in closed form."""
    if X <= 0:
        return 0.0
    first = q_function(-alpha * x0) - math.exp(-X) * q_function(alpha * (X - x0))
    hi = alpha * (X - x0) + 1.0 / alpha
    lo = -alpha * x0 + 1.0 / alpha
    if lo > 0:
        # scaled erfc absorbs exp(-x0 + 1/(2 alpha^2)), which can overflow on its own
        r2 = 1.0 / math.sqrt(2.0)
        third = 0.5 * (math.exp(-0.5 * (alpha * x0) ** 2) * sc.erfcx(lo * r2)
                       - math.exp(-X - 0.5 * (alpha * (X - x0)) ** 2) * sc.erfcx(hi * r2))
    else:
        if hi < 0:
            la, lb = sc.log_ndtr(hi), sc.log_ndtr(lo)
            logdiff = la + math.log(-math.expm1(lb - la)) if lb < la else -math.inf
        else:
            diff = sc.ndtr(hi) - sc.ndtr(lo)
            logdiff = math.log(diff) if diff > 0 else -math.inf
        # lo <= 0 keeps this exponent below -x0/2
        third = math.exp(-x0 + 0.5 / alpha ** 2 + logdiff) if logdiff > -math.inf else 0.0
    return first - third


def _clamp(v: float) -> float:
    return min(1.0, max(0.0, v))


def lemma1_F(u: float, m: int, N: int, mom: CltMoments, p_rf: float) -> float:
    """Closed-form approximation of :func:`cdf_clt`.

    The Q factor is linearized around its midpoint x0 = (e^(u-mu) - 1)/P_RF
    with the exact slope, and clipped to [0, 1].
    """
    if u <= 0:
        return 0.0
    mu, sigma = mom.mu, mom.sigma
    if sigma == 0 or p_rf == 0:
        return cdf_clt(u, m, N, mom, p_rf)
    X = math.expm1(u) / p_rf
    x0 = math.expm1(u - mu) / p_rf
    h = sigma * math.sqrt(math.pi) * math.exp(u - mu) / (p_rf * math.sqrt(2.0 * m * N))
    lo = min(max(0.0, x0 - h), X)
    hi = min(max(lo, x0 + h), X)
    A = 0.5 + x0 / (2 * h)
    B = 1.0 / (2 * h)
    ea, eb = math.exp(-lo), math.exp(-hi)
    val = (1.0 - ea) + A * (ea - eb) - B * ((1 + lo) * ea - (1 + hi) * eb)
    return _clamp(val)


def lemma1_F_second_order(u: float, mom: CltMoments, p_rf: float) -> float:
    """Large-N limit of :func:`lemma1_F`: 1 - exp(-(e^(u-mu) - 1)/P_RF)."""
    if u <= mom.mu:
        return 0.0
    return _clamp(-math.expm1(-math.expm1(u - mom.mu) / p_rf))


def lemma2_V(u: float, m: int, N: int, mom: CltMoments, p_rf: float) -> float:
    """Lower bound on :func:`cdf_clt` from the tangent of the concave Q argument."""
    if u <= 0:
        return 0.0
    mu, sigma = mom.mu, mom.sigma
    if sigma == 0 or p_rf == 0:
        return cdf_clt(u, m, N, mom, p_rf)
    X = math.expm1(u) / p_rf
    x0 = math.expm1(u - mu) / p_rf
    slope = p_rf * math.sqrt(m * N) * math.exp(mu - u) / sigma
    return _clamp(_exp_q_linear(slope, x0, X))


def lemma4_R(u: float, m: int, N: int, mom: CltMoments, p_rf: float) -> float:
    """Lower bound on :func:`cdf_clt` using log(1 + x) <= x; tight for small P_RF."""
    if u <= 0:
        return 0.0
    mu, sigma = mom.mu, mom.sigma
    if sigma == 0 or p_rf == 0:
        return cdf_clt(u, m, N, mom, p_rf)
    X = math.expm1(u) / p_rf
    slope = math.sqrt(m * N) * p_rf / sigma
    return _clamp(_exp_q_linear(slope, (u - mu) / p_rf, X))


# Both upper bounds start from the integration-by-parts identity
#   F(u) = Q(r(0)) - e^-X Q(r(X)) - C * int_0^X e^-x/(1+Px) exp(-kappa y(x)^2) dx
# with y = log(1+Px) + mu - u, kappa = mN/(2 sigma^2), C = P sqrt(mN)/(sqrt(2pi) sigma).
# Any lower bound on the remaining integral is an upper bound on F. On each
# piece of a partition, y^2 is bounded above by its chord (in l = log(1+Px)
# for lemma 3, giving powers of t = 1+Px and E_nu terms; in x for lemma 5,
# giving exponentials and E_1/Ei terms). Pieces outside the partition are
# dropped, which is also a valid lower bound since the integrand is positive.

_PIECES_PER_SIDE = 6


def _by_parts_head(u, mu, sigma, k, X):
    return q_function(k * (mu - u) / sigma) - math.exp(-X) * q_function(k * mu / sigma)


def _log_diff(la: float, lb: float) -> float:
    """log(e^la - e^lb) for la >= lb."""
    if lb >= la:
        return -math.inf
    return la + math.log(-math.expm1(lb - la))


def _log_gamma_piece(s: float, xa: float, xb: float) -> float:
    """log of int_xa^xb w^(s-1) e^-w dw, 0 < xa < xb, any real s.

    Differences of lower incomplete gammas are taken where the integrand
    rises (w < s - 1) and of upper ones where it falls, so each difference
    is dominated by the piece itself rather than by a far-away bulk.
    """
    mode = s - 1.0
    if s > 0 and xb <= max(mode, 0.0):
        return _log_diff(log_gamma_lower(s, xb), log_gamma_lower(s, xa))
    if xa >= mode:
        return _log_diff(log_gamma_upper_real(s, xa), log_gamma_upper_real(s, xb))
    left = _log_gamma_piece(s, xa, mode)
    right = _log_gamma_piece(s, mode, xb)
    return float(np.logaddexp(left, right))


def _log_power_integral(nu: float, ta: float, tb: float, p: float) -> float:
    """log of int_ta^tb t^-nu e^(-t/p) dt, 1 <= ta < tb."""
    s = 1.0 - nu
    return s * math.log(p) + _log_gamma_piece(s, ta / p, tb / p)


def lemma3_T(u: float, m: int, N: int, mom: CltMoments, p_rf: float,
             eps: Lemma3Epsilon = Lemma3Epsilon()) -> float:
    """Upper bound on :func:`cdf_clt` built from E_nu terms.

    The Gaussian kernel exp(-kappa y^2) is bounded below on pieces of width
    2*eps in y by chords of y^2 in l = log(1+Px), so each piece contributes
    a power-law integral of order nu = 1 + kappa (y_a + y_b); the piece
    starting at y = 0 has order 1 + mN eps / sigma^2. ``eps = 0`` keeps only
    the two leading Q terms.
    """
    if u <= 0:
        return 0.0
    mu, sigma = mom.mu, mom.sigma
    if sigma == 0 or p_rf == 0:
        return cdf_clt(u, m, N, mom, p_rf)
    k = math.sqrt(m * N)
    X = math.expm1(u) / p_rf
    head = _by_parts_head(u, mu, sigma, k, X)
    e = eps.epsilon
    if e == 0:
        return _clamp(head)
    kappa = m * N / (2.0 * sigma * sigma)
    lo_y, hi_y = mu - u, mu
    total = 0.0
    for j in range(-_PIECES_PER_SIDE, _PIECES_PER_SIDE):
        ya = max(2 * e * j, lo_y)
        yb = min(2 * e * (j + 1), hi_y)
        if yb <= ya:
            continue
        la, lb = ya - mu + u, yb - mu + u
        nu = 1.0 + kappa * (ya + yb)
        logi = _log_power_integral(nu, math.exp(la), math.exp(lb), p_rf)
        if logi == -math.inf:
            continue
        logc = 1.0 / p_rf - math.log(p_rf) - kappa * (ya + yb) * (mu - u) + kappa * ya * yb
        total += math.exp(logc + logi)
    C = p_rf * k / (_SQRT2PI * sigma)
    return _clamp(head - C * total)


def _log_exp_over_linear(beta: float, p: float, xa: float, xb: float) -> float:
    """log of int_xa^xb e^(-beta x) / (1 + p x) dx."""
    sa, sb = 1 + p * xa, 1 + p * xb
    if not sb > sa:
        return -math.inf
    if abs(beta) * (xb - xa) < 1e-6 or abs(beta) / p * sa < 1e-12:
        # nearly constant exponential over the piece
        return -beta * 0.5 * (xa + xb) + math.log(math.log(sb / sa) / p)
    za, zb = beta * sa / p, beta * sb / p
    if beta > 0:
        # e^(beta/p) (E1(za) - E1(zb)) / p, written with scaled E1
        ea = log_exp_integral_en(1.0, za) + za
        eb = log_exp_integral_en(1.0, zb) + zb
        # = e^(-beta xa)/p * [e^za E1(za) - e^-(zb-za) e^zb E1(zb)]
        inner = math.exp(ea) - math.exp(eb - (zb - za))
        return -beta * xa - math.log(p) + math.log(inner)
    # beta < 0: e^(beta/p) (Ei(|zb|) - Ei(|za|)) / p
    wa, wb = -za, -zb
    inner = _ei_scaled(wb) - _ei_scaled(wa) * math.exp(wa - wb)
    return -beta * xb - math.log(p) + math.log(inner)


def lemma5_S(u: float, m: int, N: int, mom: CltMoments, p_rf: float) -> float:
    """Upper bound on :func:`cdf_clt` built from exponential-integral terms.

    Chords of y(x)^2 in the RF gain x (convex wherever y < 1) bound the
    Gaussian kernel below by exponentials in x on pieces covering
    |y| <= 6 sigma/sqrt(mN); each piece integrates to E_1 or Ei terms.
    Below the threshold x = max(0, (u - mu)/(2 P_RF)) no piece starts when
    u <= mu, which leaves the two leading Q terms.
    """
    if u <= 0:
        return 0.0
    mu, sigma = mom.mu, mom.sigma
    if sigma == 0 or p_rf == 0:
        return cdf_clt(u, m, N, mom, p_rf)
    k = math.sqrt(m * N)
    X = math.expm1(u) / p_rf
    head = _by_parts_head(u, mu, sigma, k, X)
    kappa = m * N / (2.0 * sigma * sigma)
    w = min(6.0 * sigma / k, 0.99)
    step = w / _PIECES_PER_SIDE / 2.0
    lo_y, hi_y = max(mu - u, -w), min(mu, w)
    total = 0.0
    y_edges = np.arange(-w, w + step / 2, step)
    for ya0, yb0 in zip(y_edges[:-1], y_edges[1:]):
        ya, yb = max(ya0, lo_y), min(yb0, hi_y)
        if yb <= ya:
            continue
        xa = math.expm1(ya - mu + u) / p_rf
        xb = math.expm1(yb - mu + u) / p_rf
        if xb <= xa or xa > 745:
            continue
        slope = (yb * yb - ya * ya) / (xb - xa)
        beta = 1.0 + kappa * slope
        logi = _log_exp_over_linear(beta, p_rf, xa, xb)
        # kernel >= exp(-kappa (ya^2 + slope (x - xa)))
        total += math.exp(-kappa * (ya * ya - slope * xa) + logi)
    C = p_rf * k / (_SQRT2PI * sigma)
    return _clamp(head - C * total)


def epsilon_tune(m: int, N: int, mom: CltMoments, p_rf: float, u_target: float) -> Lemma3Epsilon:
    """Chord width for :func:`lemma3_T` that minimizes its gap at ``u_target``.

    Golden-section search on [0, 10 sigma^2/(mN)]; the bound stays valid for
    every width, so the minimizer only tightens it.
    """
    if u_target <= 0:
        raise ValueError("u_target must be > 0")
    if mom.sigma2 <= 1e-14 or p_rf == 0:
        return Lemma3Epsilon(0.0)
    upper = 10.0 * mom.sigma2 / (m * N)

    def gap(e):
        return lemma3_T(u_target, m, N, mom, p_rf, Lemma3Epsilon(max(e, 0.0)))

    res = optimize.minimize_scalar(gap, bounds=(0.0, upper), method="bounded",
                                   options={"xatol": 1e-6 * upper})
    cands = [(gap(0.0), 0.0), (gap(upper), upper), (gap(res.x), float(res.x))]
    return Lemma3Epsilon(min(cands)[1])


def metrics_from_cdf(cdf: Callable[[float, int], float], R: float, M: int) -> tuple[float, float]:
    """(throughput, outage) from per-round failure probabilities cdf(R/m, m)."""
    p = [min(1.0, max(0.0, cdf(R / m, m))) for m in range(1, M + 1)]
    return R * (1.0 - p[-1]) / (1.0 + sum(p[:-1])), p[-1]
