"""Special functions used by the moment and bound formulas.

Q function, upper incomplete gamma, exponential integrals Ei and E_nu,
modified Bessel K and a guarded generalized hypergeometric series.
The elementary ones are thin wrappers around scipy.special with domain
checks; E_nu for real order and pFq are implemented here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import mpmath
import numpy as np
from scipy import special as sc

__all__ = [
    "DomainError",
    "ConvergenceError",
    "SeriesControl",
    "q_function",
    "gamma_upper",
    "exp_integral_ei",
    "exp_integral_en",
    "log_exp_integral_en",
    "log_gamma_lower",
    "log_gamma_upper_real",
    "bessel_k",
    "gen_hypergeom",
]

_EPS = np.finfo(float).eps
_TINY = 1e-300


class DomainError(ValueError):
    """Argument outside the domain a function is defined (or used) on."""


class ConvergenceError(ArithmeticError):
    """A series cannot be summed reliably for the requested arguments."""


@dataclass(frozen=True)
class SeriesControl:
    max_terms: int = 10_000
    rel_tol: float = 1e-12
    abs_tol: float = 1e-300
    # largest tolerated ratio between the biggest term and the final sum
    max_cancellation: float = 1e6

    def __post_init__(self):
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("rel_tol and abs_tol must be strictly positive")


DEFAULT_SERIES = SeriesControl()


def _check_finite(x, name="x"):
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name} must be finite")


def q_function(x):
    """Gaussian tail probability Q(x) = P(Z > x) for Z ~ N(0, 1).

    Accepts scalars or arrays.
    """
    x = np.asarray(x, dtype=float)
    _check_finite(x)
    out = sc.ndtr(-x)
    return float(out) if out.ndim == 0 else out


def gamma_upper(s: float, x: float) -> float:
    """Upper incomplete gamma function, non-regularized."""
    if not s > 0:
        raise DomainError("gamma_upper requires s > 0")
    if x < 0:
        raise DomainError("gamma_upper requires x >= 0")
    if x == 0:
        return float(sc.gamma(s))
    q = sc.gammaincc(s, x)
    if q == 0.0:
        return 0.0
    if s < 170.0:
        return float(q * sc.gamma(s))
    return float(math.exp(math.log(q) + sc.gammaln(s)))


def exp_integral_ei(x: float) -> float:
    """Ei(x) on the negative half-line, where Ei(x) = -E_1(-x)."""
    if not x < 0:
        raise DomainError("exp_integral_ei is only provided for x < 0")
    if not math.isfinite(x):
        raise DomainError("x must be finite")
    return float(sc.expi(x))


def _en_continued_fraction(nu: float, x: float, max_iter: int = 10_000, scaled: bool = False) -> float:
    # modified Lentz; converges for any real nu once x is of order one
    b = x + nu
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, max_iter + 1):
        an = -i * (nu - 1.0 + i)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 3 * _EPS:
            return h if scaled else h * math.exp(-x)
    raise ConvergenceError(f"E_nu continued fraction did not converge (nu={nu}, x={x})")


def exp_integral_en(nu: float, x: float) -> float:
    """Generalized exponential integral E_nu(x) = int_1^inf t^-nu e^(-x t) dt.

    Real order nu >= 1 (non-integer orders are needed by the Lemma-3 style
    bounds), x > 0.
    """
    if not x > 0:
        raise DomainError("exp_integral_en requires x > 0")
    if nu < 1:
        raise DomainError("exp_integral_en requires nu >= 1")
    if not (math.isfinite(nu) and math.isfinite(x)):
        raise DomainError("arguments must be finite")
    if x > 700:
        # e^-x underflows; leading asymptotic term is already exact to eps
        return 0.0
    if float(nu).is_integer():
        return float(sc.expn(int(nu), x))
    if x > 1.0:
        return _en_continued_fraction(nu, x)
    return float(mpmath.expint(nu, x))


def log_exp_integral_en(nu: float, x: float) -> float:
    """log E_nu(x) for any real order and x > 0, without underflow."""
    if not x > 0:
        raise DomainError("log_exp_integral_en requires x > 0")
    if x > 1.0:
        if x + nu > 0:
            try:
                return math.log(_en_continued_fraction(nu, x, scaled=True)) - x
            except ConvergenceError:
                pass
    elif nu >= 1 and float(nu).is_integer():
        return math.log(sc.expn(int(nu), x))
    return float(mpmath.log(mpmath.expint(nu, x)))


def log_gamma_lower(s: float, x: float) -> float:
    """log of the lower incomplete gamma function for s > 0, x > 0.

    Uses the power series x^s e^-x sum x^k / (s (s+1) ... (s+k)), which has
    only positive terms and so neither cancels nor underflows.
    """
    if not (s > 0 and x > 0):
        raise DomainError("log_gamma_lower requires s > 0 and x > 0")
    if x > s + 40.0 * math.sqrt(s + 1.0):
        # essentially complete; use the regularized complement directly
        return sc.gammaln(s) + math.log1p(-sc.gammaincc(s, x))
    term = 1.0 / s
    total = term
    k = 0
    while True:
        k += 1
        term *= x / (s + k)
        total += term
        if term < _EPS * total:
            break
        if k > 100_000:
            raise ConvergenceError("lower incomplete gamma series did not converge")
    return s * math.log(x) - x + math.log(total)


def log_gamma_upper_real(s: float, x: float) -> float:
    """log of the upper incomplete gamma function for any real s, x > 0."""
    if not x > 0:
        raise DomainError("log_gamma_upper_real requires x > 0")
    return s * math.log(x) + log_exp_integral_en(1.0 - s, x)


def bessel_k(nu: float, x: float) -> float:
    """Modified Bessel function of the second kind, real order."""
    if not x > 0:
        raise DomainError("bessel_k requires x > 0")
    if not (math.isfinite(nu) and math.isfinite(x)):
        raise DomainError("arguments must be finite")
    return float(sc.kv(abs(nu), x))


def gen_hypergeom(a_params: Sequence[float], b_params: Sequence[float], x: float,
                  ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """Generalized hypergeometric series pFq(a; b; x) by direct summation.

    Raises ConvergenceError when the series diverges (p > q + 1, or
    p = q + 1 with |x| >= 1), when it does not settle within
    ``ctl.max_terms`` terms, or when cancellation between alternating terms
    would destroy more than ``ctl.max_cancellation`` in relative accuracy.
    Callers are expected to fall back to quadrature in that case.
    """
    a = [float(v) for v in a_params]
    b = [float(v) for v in b_params]
    x = float(x)
    for bj in b:
        if bj <= 0 and float(bj).is_integer():
            raise DomainError("b parameters must not be non-positive integers")
    if x == 0:
        return 1.0
    p, q = len(a), len(b)
    terminating = any(ai <= 0 and float(ai).is_integer() for ai in a)
    if not terminating:
        if p > q + 1 or (p == q + 1 and abs(x) >= 1):
            raise ConvergenceError(f"{p}F{q} series diverges at x={x}")

    term = 1.0
    total = 1.0
    biggest = 1.0
    for k in range(ctl.max_terms):
        num = 1.0
        for ai in a:
            num *= ai + k
        den = float(k + 1)
        for bj in b:
            den *= bj + k
        term *= num / den * x
        total += term
        if not math.isfinite(total):
            raise ConvergenceError(f"{p}F{q} terms overflow at x={x}")
        biggest = max(biggest, abs(term))
        if term == 0.0:
            break
        if abs(term) <= max(ctl.rel_tol * abs(total), ctl.abs_tol):
            # for p <= q the terms shrink monotonically once k exceeds |x|
            if p <= q and k + 1 < abs(x):
                continue
            break
    else:
        raise ConvergenceError(f"{p}F{q} did not converge in {ctl.max_terms} terms")

    if total == 0.0 or biggest / abs(total) > ctl.max_cancellation:
        raise ConvergenceError(f"{p}F{q} loses too much precision to cancellation at x={x}")
    return total
