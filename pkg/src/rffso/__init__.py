"""Outage and throughput of HARQ over parallel RF and FSO links.

Submodules: :mod:`specfun` (special functions), :mod:`channels` (fading
models and seeded sampling), :mod:`harq` (accumulated mutual information,
Monte Carlo and throughput), :mod:`clt` (Gaussian approximation and its
closed-form bounds), :mod:`smalln` (Gamma-Gamma bounds for few FSO
realizations), :mod:`power` (power allocation) and :mod:`experiments`
(figure presets and the CSV harness behind the ``rffso`` command).
"""
from . import channels, clt, experiments, harq, power, smalln, specfun
from .channels import (
    CompositeExponential,
    CompositeLogNormalRate,
    Exponential,
    ExponentialRate,
    GammaGamma,
    LogNormal,
    Rayleigh,
    RngStream,
)
from .harq import HarqConfig, PowerSplit, mc_decoding_profile, outage, throughput

__version__ = "0.1.0"

__all__ = [
    "channels", "clt", "experiments", "harq", "power", "smalln", "specfun",
    "CompositeExponential", "CompositeLogNormalRate", "Exponential", "ExponentialRate",
    "GammaGamma", "LogNormal", "Rayleigh", "RngStream",
    "HarqConfig", "PowerSplit", "mc_decoding_profile", "outage", "throughput",
]
