"""Channel-gain distributions for the RF and FSO links, with samplers.

FSO turbulence models: exponential, log-normal, Gamma-Gamma and the
composite exponential whose rate is itself log-normal per packet. RF
fading models: Rayleigh, exponential with a fixed rate, and the same
composite log-normal-rate exponential.

All randomness goes through :class:`RngStream`, a (seed, stream_id) pair
mapped onto numpy's counter-based Philox generator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import integrate
from scipy import special as sc

from .specfun import DomainError, bessel_k

__all__ = [
    "Exponential",
    "LogNormal",
    "GammaGamma",
    "CompositeExponential",
    "Rayleigh",
    "ExponentialRate",
    "CompositeLogNormalRate",
    "FsoTurbulence",
    "RfChannel",
    "RngStream",
    "pdf",
    "cdf",
    "mean_gain",
    "sample",
    "sample_rates",
    "lognormal_rate_params",
    "RYTOV1_A",
    "RYTOV1_B",
]

# Gamma-Gamma shaping parameters for Rytov variance 1
RYTOV1_A = 4.3939
RYTOV1_B = 2.5636

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Exponential:
    lam: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("Exponential rate must be > 0")


@dataclass(frozen=True)
class LogNormal:
    varpi: float = 0.0
    delta: float = 1.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("LogNormal delta must be > 0")


@dataclass(frozen=True)
class GammaGamma:
    a: float = RYTOV1_A
    b: float = RYTOV1_B

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("GammaGamma shape parameters must be > 0")


def lognormal_rate_params(delta: float, normalization: str = "mean") -> tuple[float, float]:
    """(log-location, log-scale) of a 'normalized' log-normal rate.

    ``normalization="mean"`` gives E[rate] = 1, ``"median"`` gives a unit
    median.
    """
    if not delta > 0:
        raise ValueError("delta must be > 0")
    if normalization == "mean":
        return -0.5 * delta * delta, delta
    if normalization == "median":
        return 0.0, delta
    raise ValueError(f"unknown normalization {normalization!r}")


@dataclass(frozen=True)
class CompositeExponential:
    """Exponential gain whose rate is redrawn per packet from a log-normal."""

    delta: float = 1.0
    normalization: str = "mean"

    def __post_init__(self):
        lognormal_rate_params(self.delta, self.normalization)


@dataclass(frozen=True)
class Rayleigh:
    pass


@dataclass(frozen=True)
class ExponentialRate:
    lambda_rf: float = 1.0

    def __post_init__(self):
        if not self.lambda_rf > 0:
            raise ValueError("ExponentialRate lambda_rf must be > 0")


@dataclass(frozen=True)
class CompositeLogNormalRate:
    delta: float = 1.0
    normalization: str = "mean"

    def __post_init__(self):
        lognormal_rate_params(self.delta, self.normalization)


FsoTurbulence = Union[Exponential, LogNormal, GammaGamma, CompositeExponential]
RfChannel = Union[Rayleigh, ExponentialRate, CompositeLogNormalRate]


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream identified by (seed, stream_id).

    Chunk ``k`` of a stream is an independent Philox sequence, so work can
    be split over workers by chunk index without changing any draw.
    """

    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= _MASK64 and 0 <= self.stream_id <= _MASK64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")

    def generator(self, chunk: int = 0) -> np.random.Generator:
        key = self.seed | (self.stream_id << 64)
        bitgen = np.random.Philox(key=key)
        if chunk:
            bitgen = bitgen.jumped(chunk)
        return np.random.Generator(bitgen)

    def spawn(self, index: int) -> "RngStream":
        """Child stream for sub-task ``index`` (e.g. one SNR knot)."""
        mixed = (self.stream_id * 0x9E3779B97F4A7C15 + index + 1) & _MASK64
        return RngStream(self.seed, mixed)


# ---------------------------------------------------------------- densities

def _log_kve(nu: float, z):
    """log(K_nu(z) e^z), falling back to the large-argument form where scipy gives up."""
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(sc.kve(abs(nu), z))
        big = ~np.isfinite(out) & (z > 1e6)
        out = np.where(big, 0.5 * np.log(np.pi / (2.0 * np.where(big, z, 1.0))), out)
    return out


def _gg_pdf(a: float, b: float, x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    nu = a - b
    z = 2.0 * np.sqrt(a * b * xp)
    # log-space; kve keeps K finite for large arguments
    logk = _log_kve(nu, z) - z
    logc = math.log(2.0) + 0.5 * (a + b) * math.log(a * b) - sc.gammaln(a) - sc.gammaln(b)
    out[pos] = np.exp(logc + (0.5 * (a + b) - 1.0) * np.log(xp) + logk)
    if np.any(x == 0):
        lim = 0.0
        if min(a, b) == 1.0:
            lim = a * b * math.gamma(abs(nu)) / (math.gamma(a) * math.gamma(b)) if nu != 0 else math.inf
        elif min(a, b) < 1.0:
            lim = math.inf
        out[x == 0] = lim
    return out


def pdf(dist: FsoTurbulence, x):
    """Density of the channel gain at ``x`` (scalar or array, x >= 0)."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or not np.all(np.isfinite(xa)):
        raise DomainError("pdf requires finite x >= 0")
    if isinstance(dist, Exponential):
        out = dist.lam * np.exp(-dist.lam * xa)
    elif isinstance(dist, LogNormal):
        out = np.zeros_like(xa)
        pos = xa > 0
        lx = np.log(xa[pos])
        out[pos] = np.exp(-((lx - dist.varpi) ** 2) / (2 * dist.delta ** 2)) / (
            math.sqrt(2 * math.pi) * dist.delta * xa[pos])
    elif isinstance(dist, GammaGamma):
        out = _gg_pdf(dist.a, dist.b, xa)
    elif isinstance(dist, CompositeExponential):
        mu, s = lognormal_rate_params(dist.delta, dist.normalization)
        out = np.array([_composite_exp_pdf(mu, s, float(v)) for v in xa.ravel()]).reshape(xa.shape)
    else:
        raise TypeError(f"unsupported distribution {dist!r}")
    return float(out) if out.ndim == 0 else out


def _composite_exp_pdf(mu: float, s: float, x: float) -> float:
    t, w = np.polynomial.hermite_e.hermegauss(80)
    lam = np.exp(mu + s * t)
    return float(np.sum(w * lam * np.exp(-lam * x)) / math.sqrt(2 * math.pi))


def _gg_cdf_scalar(a: float, b: float, x: float) -> float:
    if x <= 0:
        return 0.0
    # P(XY <= x) with X ~ Gamma(a, 1/a), Y ~ Gamma(b, 1/b), conditioned on Y
    def integrand(t):
        return sc.gammainc(a, a * b * x / t) * math.exp((b - 1) * math.log(t) - t - sc.gammaln(b))
    val, _ = integrate.quad(integrand, 0, np.inf, epsabs=1e-13, epsrel=1e-11, limit=200)
    return min(1.0, max(0.0, val))


def cdf(dist: FsoTurbulence, x):
    """Cumulative distribution of the channel gain."""
    xa = np.asarray(x, dtype=float)
    if isinstance(dist, Exponential):
        out = -np.expm1(-dist.lam * np.maximum(xa, 0.0))
    elif isinstance(dist, LogNormal):
        out = np.zeros_like(xa)
        pos = xa > 0
        out[pos] = sc.ndtr((np.log(xa[pos]) - dist.varpi) / dist.delta)
    elif isinstance(dist, GammaGamma):
        out = np.array([_gg_cdf_scalar(dist.a, dist.b, float(v)) for v in xa.ravel()]).reshape(xa.shape)
    elif isinstance(dist, CompositeExponential):
        mu, s = lognormal_rate_params(dist.delta, dist.normalization)
        t, w = np.polynomial.hermite_e.hermegauss(80)
        lam = np.exp(mu + s * t)
        flat = np.maximum(xa.ravel(), 0.0)
        out = (-np.expm1(-np.outer(flat, lam)) @ w / math.sqrt(2 * math.pi)).reshape(xa.shape)
    else:
        raise TypeError(f"unsupported distribution {dist!r}")
    return float(out) if np.ndim(out) == 0 else out


def mean_gain(dist: FsoTurbulence) -> float:
    """E[G] of the channel gain."""
    if isinstance(dist, Exponential):
        return 1.0 / dist.lam
    if isinstance(dist, LogNormal):
        return math.exp(dist.varpi + 0.5 * dist.delta ** 2)
    if isinstance(dist, GammaGamma):
        return 1.0
    if isinstance(dist, CompositeExponential):
        mu, s = lognormal_rate_params(dist.delta, dist.normalization)
        return math.exp(-mu + 0.5 * s * s)
    raise TypeError(f"unsupported distribution {dist!r}")


# ---------------------------------------------------------------- sampling

def sample_rates(dist, gen: np.random.Generator, count: int) -> np.ndarray | None:
    """Per-packet rates for composite models, ``None`` for fixed models."""
    if isinstance(dist, (CompositeExponential, CompositeLogNormalRate)):
        mu, s = lognormal_rate_params(dist.delta, dist.normalization)
        return np.exp(mu + s * gen.standard_normal(count))
    return None


def _draw(dist, gen: np.random.Generator, shape, rates=None) -> np.ndarray:
    if isinstance(dist, Exponential):
        return gen.standard_exponential(shape) / dist.lam
    if isinstance(dist, LogNormal):
        return np.exp(dist.varpi + dist.delta * gen.standard_normal(shape))
    if isinstance(dist, GammaGamma):
        x = gen.standard_gamma(dist.a, shape) / dist.a
        x *= gen.standard_gamma(dist.b, shape) / dist.b
        return x
    if isinstance(dist, Rayleigh):
        return gen.standard_exponential(shape)
    if isinstance(dist, ExponentialRate):
        return gen.standard_exponential(shape) / dist.lambda_rf
    if isinstance(dist, (CompositeExponential, CompositeLogNormalRate)):
        if rates is None:
            rates = sample_rates(dist, gen, shape[0] if isinstance(shape, tuple) else shape)
        g = gen.standard_exponential(shape)
        r = rates.reshape((-1,) + (1,) * (g.ndim - 1))
        return g / r
    raise TypeError(f"unsupported distribution {dist!r}")


def sample(dist, rng: RngStream | np.random.Generator, count: int) -> np.ndarray:
    """``count`` i.i.d. gain draws.

    Composite models redraw their rate for every sample here; the HARQ
    simulator instead holds the rate fixed over a packet.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return _draw(dist, gen, count)
