"""Accumulated mutual information of the joint RF-FSO link under INR HARQ.

Monte Carlo estimation of the per-round decoding-failure probabilities
and the throughput/outage metrics built from them.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channels import (
    CompositeExponential,
    CompositeLogNormalRate,
    ExponentialRate,
    Rayleigh,
    RngStream,
    _draw,
    lognormal_rate_params,
    sample_rates,
)

__all__ = [
    "HarqConfig",
    "PowerSplit",
    "DecodingProfile",
    "MonteCarloEstimate",
    "McResult",
    "ami",
    "mc_decoding_profile",
    "mc_decoding_profiles",
    "conditional_decoding_profiles",
    "throughput",
    "throughput_ci95",
    "outage",
    "db_to_linear",
    "IMDD_C",
]

IMDD_C = math.e / (2 * math.pi)
CHUNK_PACKETS = 8192


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


@dataclass(frozen=True)
class HarqConfig:
    rate_R: float
    max_rounds_M: int = 1
    fso_realizations_N: int = 1
    psi: float = 1.0
    detection_c: float = 1.0

    def __post_init__(self):
        if not self.rate_R > 0:
            raise ValueError("rate_R must be > 0")
        if int(self.max_rounds_M) != self.max_rounds_M or self.max_rounds_M < 1:
            raise ValueError("max_rounds_M must be an integer >= 1")
        if int(self.fso_realizations_N) != self.fso_realizations_N or self.fso_realizations_N < 1:
            raise ValueError("fso_realizations_N must be an integer >= 1")
        if not self.psi > 0:
            raise ValueError("psi must be > 0")
        if not self.detection_c > 0:
            raise ValueError("detection_c must be > 0")


@dataclass(frozen=True)
class PowerSplit:
    """Transmit powers (linear, noise-normalized) of the RF and FSO links."""

    p_rf: float
    p_fso: float

    def __post_init__(self):
        if self.p_rf < 0 or self.p_fso < 0:
            raise ValueError("powers must be non-negative")
        if not self.p_rf + self.p_fso > 0:
            raise ValueError("total power must be > 0")

    @property
    def total(self) -> float:
        return self.p_rf + self.p_fso

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.total)

    @classmethod
    def from_db(cls, snr_db: float, rf_fraction: float = 0.5) -> "PowerSplit":
        p = float(db_to_linear(snr_db))
        return cls(p * rf_fraction, p * (1.0 - rf_fraction))


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    half_width_95: float
    trials: int
    seed: int

    @classmethod
    def from_count(cls, count: int, trials: int, seed: int) -> "MonteCarloEstimate":
        p = count / trials
        return cls(p, 1.96 * math.sqrt(p * (1.0 - p) / trials), trials, seed)

    def tolerance(self, k: float = 2.0) -> float:
        """k half-widths, floored by the Wilson width z^2/n.

        The Wald half-width is zero when no (or every) packet fails, which
        would demand exact agreement; the floor keeps such comparisons
        meaningful.
        """
        return k * self.half_width_95 + 1.96 ** 2 / self.trials


@dataclass(frozen=True)
class DecodingProfile:
    """probs[m-1] = Pr(W_m <= R/m), m = 1..M."""

    probs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if not self.probs:
            raise ValueError("profile must have at least one round")
        if any(not (0.0 <= p <= 1.0) for p in self.probs):
            raise ValueError("probabilities must lie in [0, 1]")

    def __len__(self):
        return len(self.probs)


@dataclass(frozen=True)
class McResult:
    profile: DecodingProfile
    estimates: tuple[MonteCarloEstimate, ...]
    packets: int
    nesting_violations: int = 0
    extras: dict = field(default_factory=dict, compare=False)

    @property
    def outage(self) -> MonteCarloEstimate:
        return self.estimates[-1]


def ami(g_rf: float, g_fso, m: int, cfg: HarqConfig, pw: PowerSplit) -> float:
    """W_m for one packet given the RF gain and the m x N block of FSO gains."""
    g = np.asarray(g_fso, dtype=float)
    if g.shape != (m, cfg.fso_realizations_N):
        raise ValueError(f"g_fso must have shape ({m}, {cfg.fso_realizations_N}), got {g.shape}")
    fso = np.log1p(cfg.detection_c * pw.p_fso * g).sum()
    return float(math.log1p(pw.p_rf * g_rf) + cfg.psi * fso / (m * cfg.fso_realizations_N))


def _chunk_sizes(trials: int, chunk: int) -> list[int]:
    full, rest = divmod(trials, chunk)
    return [chunk] * full + ([rest] if rest else [])


def _draw_packet_block(cfg: HarqConfig, rf, fso, gen: np.random.Generator, n: int):
    M, N = cfg.max_rounds_M, cfg.fso_realizations_N
    g_rf = _draw(rf, gen, n, rates=sample_rates(rf, gen, n))
    g_fso = _draw(fso, gen, (n, M, N), rates=sample_rates(fso, gen, n))
    return g_rf, g_fso


def _mc_chunk(cfg, splits, rf, fso, rng: RngStream, index: int, n: int):
    gen = rng.generator(index)
    g_rf, g_fso = _draw_packet_block(cfg, rf, fso, gen, n)
    M, N = cfg.max_rounds_M, cfg.fso_realizations_N
    m = np.arange(1, M + 1)
    fails = np.zeros((len(splits), M), dtype=np.int64)
    bad = np.zeros(len(splits), dtype=np.int64)
    for k, pw in enumerate(splits):
        per_round = np.log1p(cfg.detection_c * pw.p_fso * g_fso).sum(axis=2)
        # m * W_m along one trajectory; nested by construction
        mw = m * np.log1p(pw.p_rf * g_rf)[:, None] + cfg.psi / N * np.cumsum(per_round, axis=1)
        fails[k] = np.count_nonzero(mw <= cfg.rate_R, axis=0)
        bad[k] = np.count_nonzero(np.any(np.diff(mw, axis=1) < 0, axis=1))
    return fails, bad


def mc_decoding_profiles(cfg: HarqConfig, splits: Sequence[PowerSplit], rf, fso, trials: int,
                         rng: RngStream, workers: int = 1,
                         chunk: int = CHUNK_PACKETS) -> list[McResult]:
    """Monte Carlo decoding profiles for several power splits on shared draws.

    Every packet draws one RF gain (held over all rounds) and M x N fresh FSO
    gains. The failure event m*W_m <= R is evaluated on the same trajectory
    for every m, so the empirical profile is non-increasing in m. The same
    gains are reused for every split (common random numbers).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    splits = list(splits)
    sizes = _chunk_sizes(trials, chunk)
    jobs = list(enumerate(sizes))

    def run(job):
        return _mc_chunk(cfg, splits, rf, fso, rng, job[0], job[1])

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]

    fails = sum(p[0] for p in parts)
    bad = sum(p[1] for p in parts)
    out = []
    for k in range(len(splits)):
        est = tuple(MonteCarloEstimate.from_count(int(c), trials, rng.seed) for c in fails[k])
        prof = DecodingProfile(tuple(e.value for e in est))
        out.append(McResult(prof, est, trials, int(bad[k])))
    return out


def mc_decoding_profile(cfg: HarqConfig, pw: PowerSplit, rf, fso, trials: int = 1_000_000,
                        rng: RngStream = RngStream(), workers: int = 1) -> McResult:
    """Monte Carlo decoding profile for a single power split."""
    if trials < 1000:
        raise ValueError("trials must be >= 1000")
    return mc_decoding_profiles(cfg, [pw], rf, fso, trials, rng, workers)[0]


def _rf_cdf(rf, t: np.ndarray) -> np.ndarray:
    """P(G_RF <= t) for t >= 0, averaged over the rate for composite models."""
    t = np.maximum(t, 0.0)
    if isinstance(rf, Rayleigh):
        return -np.expm1(-t)
    if isinstance(rf, ExponentialRate):
        return -np.expm1(-rf.lambda_rf * t)
    if isinstance(rf, CompositeLogNormalRate):
        mu, s = lognormal_rate_params(rf.delta, rf.normalization)
        z, w = np.polynomial.hermite_e.hermegauss(60)
        lam = np.exp(mu + s * z)
        acc = np.zeros_like(t)
        for lk, wk in zip(lam, w):
            acc += wk * -np.expm1(-lk * t)
        return acc / math.sqrt(2 * math.pi)
    raise TypeError(f"unsupported RF model {rf!r}")


def conditional_decoding_profiles(cfg: HarqConfig, splits: Sequence[PowerSplit], rf, fso,
                                  fso_trials: int, rng: RngStream) -> list[DecodingProfile]:
    """Decoding profiles with the RF gain integrated out in closed form.

    Only the FSO trajectories are sampled; each contributes
    P(G_RF <= (exp((R - psi*S_m/N)/m) - 1)/P_RF). The estimate is smooth in
    the powers and resolves the deep high-SNR tail that plain Monte Carlo
    cannot reach, which makes it a usable optimization objective.
    """
    M, N = cfg.max_rounds_M, cfg.fso_realizations_N
    m = np.arange(1, M + 1)
    sums = np.zeros((len(splits), M))
    for index, n in enumerate(_chunk_sizes(fso_trials, CHUNK_PACKETS)):
        gen = rng.generator(index)
        g_fso = _draw(fso, gen, (n, M, N), rates=sample_rates(fso, gen, n))
        for k, pw in enumerate(splits):
            cum = np.cumsum(np.log1p(cfg.detection_c * pw.p_fso * g_fso).sum(axis=2), axis=1)
            slack = (cfg.rate_R - cfg.psi / N * cum) / m  # rate the RF link must still carry
            if pw.p_rf > 0:
                prob = np.where(slack > 0, _rf_cdf(rf, np.expm1(np.maximum(slack, 0.0)) / pw.p_rf), 0.0)
            else:
                prob = (slack >= 0).astype(float)
            sums[k] += prob.sum(axis=0)
    return [DecodingProfile(tuple(np.clip(s / fso_trials, 0.0, 1.0))) for s in sums]


def throughput(profile: DecodingProfile | Sequence[float], R: float) -> float:
    """Long-run throughput R (1 - p_M) / (1 + sum_{m<M} p_m)."""
    p = profile.probs if isinstance(profile, DecodingProfile) else tuple(profile)
    if not p:
        raise ValueError("profile must have at least one round")
    return R * (1.0 - p[-1]) / (1.0 + sum(p[:-1]))


def outage(profile: DecodingProfile | Sequence[float]) -> float:
    """Outage probability, the failure probability after the last round."""
    p = profile.probs if isinstance(profile, DecodingProfile) else tuple(profile)
    if not p:
        raise ValueError("profile must have at least one round")
    return float(p[-1])


def throughput_ci95(profile: DecodingProfile | Sequence[float], R: float, trials: int) -> float:
    """95% half-width of the Monte Carlo throughput, by the delta method.

    The failure events are nested along a packet trajectory, so
    cov(1{fail at m}, 1{fail at k}) = p_max(m,k) - p_m p_k.
    """
    p = np.asarray(profile.probs if isinstance(profile, DecodingProfile) else profile, dtype=float)
    M = p.size
    den = 1.0 + p[:-1].sum()
    grad = np.full(M, -R * (1.0 - p[-1]) / den ** 2)
    grad[-1] = -R / den
    if M == 1:
        grad[0] = -R
    idx = np.arange(M)
    cov = p[np.maximum.outer(idx, idx)] - np.outer(p, p)
    var = float(grad @ cov @ grad) / trials
    return 1.96 * math.sqrt(max(var, 0.0))
