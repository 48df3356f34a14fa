"""Experiment specifications, figure presets and the runner that turns them into rows.

A run is a list of independent *points* (one SNR knot of one curve
family). Each point gets its own random stream derived from the run seed
and the point index, and rows are merged in point order, so the output is
identical whatever the number of workers.
"""
from __future__ import annotations

import configparser
import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from . import clt, harq, smalln
from .channels import (
    CompositeExponential,
    CompositeLogNormalRate,
    Exponential,
    ExponentialRate,
    GammaGamma,
    LogNormal,
    Rayleigh,
    RngStream,
    RYTOV1_A,
    RYTOV1_B,
    lognormal_rate_params,
)
from .harq import HarqConfig, PowerSplit
from .power import clt_outage_objective, grid_optimize
from .specfun import ConvergenceError, q_function

__all__ = [
    "ConfigError",
    "ExperimentSpec",
    "ResultRow",
    "RunResult",
    "SCENARIOS",
    "METHODS",
    "preset",
    "load_config",
    "run",
    "rows_to_csv",
    "rows_to_gnuplot",
    "compare_report",
    "CSV_HEADER",
]

CSV_HEADER = "scenario,snr_db,method,m,metric,value,ci95"

SCENARIOS = (
    "fig3_clt_N",
    "fig4to6_lemma_bounds",
    "fig7_small_n",
    "fig8_harq_depth",
    "fig9_rate_sweep",
    "fig10_rf_vs_fso_vs_joint",
    "fig11_power_alloc",
    "custom",
)
METHODS = ("mc", "clt_quadrature", "lemma1", "lemma2", "lemma3", "lemma4", "lemma5",
           "upper_minkowski", "lower_jensen", "high_snr")
SIMULATION = frozenset({"mc"})
ANALYTIC = frozenset({"clt_quadrature", "lemma1", "lemma2", "lemma3", "lemma4", "lemma5"})
BOUNDS = frozenset({"upper_minkowski", "lower_jensen", "high_snr"})


class ConfigError(ValueError):
    """Invalid experiment specification; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class ExperimentSpec:
    """One scenario to run. Sweep lists default to the single value in ``cfg``."""

    scenario: str
    fso: object
    rf: object
    cfg: HarqConfig
    snr_db: tuple[float, ...]
    trials: int = 100_000
    seed: int = 1
    N_list: tuple[int, ...] = ()
    M_list: tuple[int, ...] = ()
    R_list: tuple[float, ...] = ()
    fso_list: tuple = ()
    methods: frozenset = field(default_factory=lambda: frozenset(METHODS))
    name: str = ""

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError("scenario", f"unknown scenario {self.scenario!r}")
        if not self.snr_db:
            raise ConfigError("snr_db", "at least one SNR knot is required")
        if any(b <= a for a, b in zip(self.snr_db, self.snr_db[1:])):
            raise ConfigError("snr_db", "power grid must be strictly increasing")
        if self.trials < 1000:
            raise ConfigError("trials", "must be >= 1000")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError("methods", f"unknown methods {sorted(unknown)}")

    @property
    def label(self) -> str:
        return self.name or self.scenario


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    snr_db: float
    method: str
    m: int
    metric: str
    value: float
    ci95: float = 0.0
    error: str = ""
    trials: int = 0  # Monte Carlo sample size, kept out of the CSV

    def csv_fields(self) -> list[str]:
        ci = self.error if self.error else _fmt(self.ci95)
        return [self.scenario, _fmt(self.snr_db), self.method, str(self.m), self.metric, _fmt(self.value), ci]


@dataclass
class RunResult:
    rows: list[ResultRow]
    violations: list[str]
    errors: list[str]


def _fmt(v: float) -> str:
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return format(float(v), ".10g")


# ------------------------------------------------------------------ presets

def _grid(lo: float, hi: float, step: float) -> tuple[float, ...]:
    return tuple(float(v) for v in np.round(np.arange(lo, hi + step / 2, step), 10))


def preset(name: str, trials: int | None = None, seed: int | None = None) -> list[ExperimentSpec]:
    """Scenario specs reproducing one figure setup (``fig3`` ... ``fig11``)."""
    key = name.lower().replace("figure", "fig")
    exp1 = Exponential(1.0)
    ln = LogNormal(0.0, 1.0)
    gg = GammaGamma(RYTOV1_A, RYTOV1_B)
    specs: list[ExperimentSpec]
    if key == "fig3":
        specs = [ExperimentSpec("fig3_clt_N", exp1, Rayleigh(), HarqConfig(4.0, 2, 50), _grid(0, 25, 5),
                                trials=1_000_000, N_list=(1, 5, 50))]
    elif key in ("fig4", "fig5", "fig6", "fig4to6"):
        dists = {"fig4": (exp1,), "fig5": (ln,), "fig6": (gg,)}.get(key, (exp1, ln, gg))
        specs = [ExperimentSpec("fig4to6_lemma_bounds", exp1, Rayleigh(), HarqConfig(5.0, 2, 50),
                                _grid(0, 30, 2.5), trials=100_000, fso_list=dists)]
    elif key == "fig7":
        specs = [ExperimentSpec("fig7_small_n", gg, Rayleigh(), HarqConfig(5.0, 2, 1), _grid(0, 40, 5),
                                trials=1_000_000)]
    elif key == "fig8":
        specs = [ExperimentSpec("fig8_harq_depth", exp1, Rayleigh(), HarqConfig(6.0, 4, 100), _grid(0, 30, 2.5),
                                trials=100_000, M_list=(1, 2, 3, 4))]
    elif key == "fig9":
        specs = [ExperimentSpec("fig9_rate_sweep", ln, Rayleigh(), HarqConfig(5.0, 2, 100), (10.0, 20.0, 30.0),
                                trials=20_000, R_list=_grid(0.5, 16, 0.5))]
    elif key == "fig10":
        specs = [ExperimentSpec("fig10_rf_vs_fso_vs_joint", CompositeExponential(1.0, "mean"),
                                CompositeLogNormalRate(1.0, "mean"), HarqConfig(5.0, 2, 100), _grid(0, 40, 1),
                                trials=100_000)]
    elif key == "fig11":
        specs = [ExperimentSpec("fig11_power_alloc", exp1, Rayleigh(), HarqConfig(5.0, 2, 20), _grid(0, 40, 5),
                                trials=100_000, fso_list=(exp1, ln))]
    else:
        raise ConfigError("preset", f"unknown preset {name!r}; expected fig3 ... fig11")
    out = []
    for s in specs:
        if trials is not None:
            s = replace(s, trials=trials)
        if seed is not None:
            s = replace(s, seed=seed)
        out.append(s)
    return out


# ------------------------------------------------------------ config files

def _parse_floats(text: str, path: str) -> tuple[float, ...]:
    text = text.strip()
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3 or parts[2] <= 0:
                raise ValueError
            return _grid(*parts)
        return tuple(float(p) for p in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(path, f"expected numbers or lo:hi:step, got {text!r}") from None


def _build_fso(sec: configparser.SectionProxy, path: str):
    kind = sec.get("fso", "exponential").strip().lower()
    try:
        if kind == "exponential":
            return Exponential(sec.getfloat("lam", 1.0))
        if kind == "lognormal":
            return LogNormal(sec.getfloat("varpi", 0.0), sec.getfloat("delta", 1.0))
        if kind == "gammagamma":
            return GammaGamma(sec.getfloat("a", RYTOV1_A), sec.getfloat("b", RYTOV1_B))
        if kind == "composite":
            return CompositeExponential(sec.getfloat("fso_delta", 1.0), sec.get("normalization", "mean"))
    except ValueError as exc:
        raise ConfigError(f"{path}.fso", str(exc)) from None
    raise ConfigError(f"{path}.fso", f"unknown FSO model {kind!r}")


def _build_rf(sec: configparser.SectionProxy, path: str):
    kind = sec.get("rf", "rayleigh").strip().lower()
    try:
        if kind == "rayleigh":
            return Rayleigh()
        if kind == "exponential_rate":
            return ExponentialRate(sec.getfloat("lambda_rf", 1.0))
        if kind == "composite":
            return CompositeLogNormalRate(sec.getfloat("rf_delta", 1.0), sec.get("normalization", "mean"))
    except ValueError as exc:
        raise ConfigError(f"{path}.rf", str(exc)) from None
    raise ConfigError(f"{path}.rf", f"unknown RF model {kind!r}")


def load_config(text: str) -> list[ExperimentSpec]:
    """Parse an INI document with one section per experiment.

    Keys: scenario, fso (exponential|lognormal|gammagamma|composite) and its
    parameters (lam, varpi, delta, a, b, fso_delta, normalization), rf
    (rayleigh|exponential_rate|composite) with lambda_rf / rf_delta,
    rate_R, max_rounds_M, fso_realizations_N, psi, detection_c, snr_db
    (list or lo:hi:step), trials, seed, methods and the sweep lists N_list,
    M_list, R_list.
    """
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    if not parser.sections():
        raise ConfigError("config", "no experiment sections found")
    specs = []
    for name in parser.sections():
        sec = parser[name]
        try:
            cfg = HarqConfig(sec.getfloat("rate_R", 5.0), sec.getint("max_rounds_M", 2),
                             sec.getint("fso_realizations_N", 50), sec.getfloat("psi", 1.0),
                             sec.getfloat("detection_c", 1.0))
        except ValueError as exc:
            raise ConfigError(f"{name}.harq", str(exc)) from None
        methods = sec.get("methods", "")
        kw = {}
        for key in ("N_list", "M_list"):
            if key in sec:
                kw[key] = tuple(int(v) for v in _parse_floats(sec[key], f"{name}.{key}"))
        if "R_list" in sec:
            kw["R_list"] = _parse_floats(sec["R_list"], f"{name}.R_list")
        try:
            trials = sec.getint("trials", 100_000)
            seed = sec.getint("seed", 1)
        except ValueError as exc:
            raise ConfigError(f"{name}.trials", str(exc)) from None
        try:
            spec = ExperimentSpec(
                scenario=sec.get("scenario", "custom").strip(),
                fso=_build_fso(sec, name), rf=_build_rf(sec, name), cfg=cfg,
                snr_db=_parse_floats(sec.get("snr_db", "0:30:5"), f"{name}.snr_db"),
                trials=trials, seed=seed,
                methods=frozenset(m.strip() for m in methods.split(",")) if methods.strip() else frozenset(METHODS),
                name=name if name != sec.get("scenario", "custom").strip() else "",
                **kw)
        except ConfigError as exc:
            if exc.path.startswith(f"{name}."):
                raise
            raise ConfigError(f"{name}.{exc.path}", str(exc).split(": ", 1)[1]) from None
        specs.append(spec)
    return specs


# ------------------------------------------------------------ point kernels

@dataclass
class _Point:
    scenario: str
    snr_db: float
    work: Callable[[RngStream], list[ResultRow]]


def _rows_from_mc(scn, snr, res: harq.McResult, R: float, Ms: Iterable[int], metrics=("outage", "throughput")):
    rows = []
    for M in Ms:
        prof = harq.DecodingProfile(res.profile.probs[:M])
        if "outage" in metrics:
            est = res.estimates[M - 1]
            rows.append(ResultRow(scn, snr, "mc", M, "outage", est.value, est.half_width_95, trials=res.packets))
        if "throughput" in metrics:
            rows.append(ResultRow(scn, snr, "mc", M, "throughput", harq.throughput(prof, R),
                                  harq.throughput_ci95(prof, R, res.packets), trials=res.packets))
    return rows


def _rf_scale(rf) -> float:
    """Factor turning P_RF into the equivalent Rayleigh power."""
    if isinstance(rf, Rayleigh):
        return 1.0
    if isinstance(rf, ExponentialRate):
        return 1.0 / rf.lambda_rf
    raise TypeError("analytic methods need Rayleigh or fixed-rate exponential RF")


def _moments(fso, p_fso, cfg: HarqConfig) -> clt.CltMoments:
    if p_fso == 0:
        return clt.CltMoments(0.0, 0.0)
    if isinstance(fso, Exponential):
        mom = clt.moments_exponential(fso.lam, p_fso, cfg.detection_c)
    else:
        mom = clt.moments_numeric(fso, p_fso, cfg.detection_c)
    return mom.scaled(cfg.psi)


def _analytic_rows(scn, snr, cfg: HarqConfig, fso, rf, pw: PowerSplit, Ms, methods, tune_u=True):
    """CLT quadrature and the five closed forms for every M in ``Ms``."""
    rows = []
    mom = _moments(fso, pw.p_fso, cfg)
    prf = pw.p_rf * _rf_scale(rf)
    N, R = cfg.fso_realizations_N, cfg.rate_R

    def fam(name):
        if name == "clt_quadrature":
            return lambda u, m: clt.cdf_clt(u, m, N, mom, prf)
        if name == "lemma1":
            return lambda u, m: clt.lemma1_F(u, m, N, mom, prf)
        if name == "lemma2":
            return lambda u, m: clt.lemma2_V(u, m, N, mom, prf)
        if name == "lemma3":
            return lambda u, m: clt.lemma3_T(u, m, N, mom, prf, clt.epsilon_tune(m, N, mom, prf, u))
        if name == "lemma4":
            return lambda u, m: clt.lemma4_R(u, m, N, mom, prf)
        return lambda u, m: clt.lemma5_S(u, m, N, mom, prf)

    for name in ("clt_quadrature", "lemma1", "lemma2", "lemma3", "lemma4", "lemma5"):
        if name not in methods:
            continue
        f = fam(name)
        cache = {}

        def cdf(u, m, f=f, cache=cache):
            if m not in cache:
                cache[m] = f(u, m)
            return cache[m]

        for M in Ms:
            thr, out = clt.metrics_from_cdf(cdf, R, M)
            rows.append(ResultRow(scn, snr, name, M, "outage", out))
            rows.append(ResultRow(scn, snr, name, M, "throughput", thr))
    return rows


def _dist_tag(d) -> str:
    return {Exponential: "exponential", LogNormal: "lognormal", GammaGamma: "gammagamma",
            CompositeExponential: "composite"}[type(d)]


def _points_generic(spec: ExperimentSpec, scn: str, cfg: HarqConfig, fso, Ms, with_bounds=False) -> list[_Point]:
    pts = []
    for snr in spec.snr_db:
        pw = PowerSplit.from_db(snr, 0.5)

        def work(rng, snr=snr, pw=pw):
            rows = []
            if "mc" in spec.methods:
                res = harq.mc_decoding_profile(cfg, pw, spec.rf, fso, spec.trials, rng)
                rows += _rows_from_mc(scn, snr, res, cfg.rate_R, Ms)
            if ANALYTIC & spec.methods and isinstance(spec.rf, (Rayleigh, ExponentialRate)) \
                    and not isinstance(fso, CompositeExponential):
                rows += _analytic_rows(scn, snr, cfg, fso, spec.rf, pw, Ms, spec.methods)
            if with_bounds:
                rows += _bound_rows(scn, snr, cfg, fso, pw, Ms, spec.methods)
            return rows

        pts.append(_Point(scn, snr, work))
    return pts


def _bound_rows(scn, snr, cfg, fso, pw, Ms, methods):
    rows = []
    if not isinstance(fso, GammaGamma):
        return rows
    a, b = fso.a, fso.b
    R = cfg.rate_R
    fns = {"upper_minkowski": smalln.upper_bound_prob, "lower_jensen": smalln.lower_bound_prob,
           "high_snr": smalln.high_snr_lower}
    for name, fn in fns.items():
        if name not in methods:
            continue
        cache = {}

        def cdf(u, m, fn=fn, cache=cache):
            if m not in cache:
                cache[m] = fn(u, m, cfg, pw, a, b)
            return cache[m]

        for M in Ms:
            if M * cfg.fso_realizations_N > smalln.MAX_MN:
                continue
            thr, out = clt.metrics_from_cdf(cdf, R, M)
            rows.append(ResultRow(scn, snr, name, M, "outage", out))
            rows.append(ResultRow(scn, snr, name, M, "throughput", thr))
    return rows


def _points_fig10(spec: ExperimentSpec) -> list[_Point]:
    cfg = spec.cfg
    R, M, N = cfg.rate_R, cfg.max_rounds_M, cfg.fso_realizations_N
    u = R / M
    z, w = np.polynomial.hermite_e.hermegauss(24)
    w = w / math.sqrt(2.0 * math.pi)
    loc_f, sc_f = lognormal_rate_params(spec.fso.delta, spec.fso.normalization) \
        if isinstance(spec.fso, CompositeExponential) else (0.0, 0.0)
    loc_r, sc_r = lognormal_rate_params(spec.rf.delta, spec.rf.normalization) \
        if isinstance(spec.rf, CompositeLogNormalRate) else (0.0, 0.0)
    lam_f, lam_r = np.exp(loc_f + sc_f * z), np.exp(loc_r + sc_r * z)

    def analytic(variant, P):
        # average the CLT outage over both per-packet rates (Gauss-Hermite)
        if variant == "rf_only":
            return float(np.sum(w * -np.expm1(-lam_r * math.expm1(u) / P)))
        p_fso = P if variant == "fso_only" else P / 2
        moms = [_moments(Exponential(l), p_fso, cfg) for l in lam_f]
        if variant == "fso_only":
            return float(sum(wj * (q_function(math.sqrt(M * N) * (mj.mu - u) / mj.sigma) if mj.sigma > 0
                                   else float(mj.mu <= u)) for wj, mj in zip(w, moms)))
        return float(sum(wi * wj * clt.cdf_clt(u, M, N, mj, P / 2 / li)
                         for li, wi in zip(lam_r, w) for mj, wj in zip(moms, w)))

    pts = []
    for variant, frac in (("rf_only", 1.0), ("fso_only", 0.0), ("joint", 0.5)):
        scn = f"{spec.label}:{variant}"
        for snr in spec.snr_db:
            pw = PowerSplit.from_db(snr, frac)

            def work(rng, snr=snr, pw=pw, variant=variant, scn=scn):
                rows = []
                if "mc" in spec.methods:
                    res = harq.mc_decoding_profile(cfg, pw, spec.rf, spec.fso, spec.trials, rng)
                    rows += _rows_from_mc(scn, snr, res, R, [M], metrics=("outage",))
                if "clt_quadrature" in spec.methods:
                    rows.append(ResultRow(scn, snr, "clt_quadrature", M, "outage", analytic(variant, pw.total)))
                return rows

            pts.append(_Point(scn, snr, work))
    return pts


def _points_fig11(spec: ExperimentSpec) -> list[_Point]:
    cfg = spec.cfg
    pts = []
    for fso in spec.fso_list or (spec.fso,):
        tag = _dist_tag(fso)
        for snr in spec.snr_db:
            P = float(harq.db_to_linear(snr))

            def work(rng, snr=snr, P=P, fso=fso, tag=tag):
                rows = []
                obj = clt_outage_objective(cfg, fso)
                uni = PowerSplit(P / 2, P / 2)
                scn_u, scn_o = f"{spec.label}:{tag}:uniform", f"{spec.label}:{tag}:optimal"
                if "clt_quadrature" in spec.methods:
                    rows.append(ResultRow(scn_u, snr, "clt_quadrature", cfg.max_rounds_M, "outage", obj(uni)))
                    best = grid_optimize(P, obj)
                    rows.append(ResultRow(scn_o, snr, "clt_quadrature", cfg.max_rounds_M, "outage", best.objective))
                    rows.append(ResultRow(scn_o, snr, "clt_quadrature", cfg.max_rounds_M, "rf_share", best.ratio))
                if "mc" in spec.methods:
                    res = harq.mc_decoding_profile(cfg, uni, spec.rf, fso, spec.trials, rng)
                    rows += _rows_from_mc(scn_u, snr, res, cfg.rate_R, [cfg.max_rounds_M], metrics=("outage",))
                return rows

            pts.append(_Point(f"{spec.label}:{tag}", snr, work))
    return pts


def _points_fig9(spec: ExperimentSpec) -> list[_Point]:
    pts = []
    Ms = spec.M_list or tuple(range(1, spec.cfg.max_rounds_M + 1))
    mc_every = max(1, int(round(2.0 / (spec.R_list[1] - spec.R_list[0])))) if len(spec.R_list) > 1 else 1
    for k, R in enumerate(spec.R_list or (spec.cfg.rate_R,)):
        cfg = replace(spec.cfg, rate_R=R, max_rounds_M=max(Ms))
        scn = f"{spec.label}:R={_fmt(R)}"
        methods = spec.methods if k % mc_every == 0 else spec.methods - {"mc"}
        sub = replace(spec, methods=methods)
        pts += _points_generic(sub, scn, cfg, spec.fso, Ms)
    return pts


def _build_points(spec: ExperimentSpec) -> list[_Point]:
    cfg = spec.cfg
    scn = spec.label
    s = spec.scenario
    if s == "fig3_clt_N":
        pts = []
        for N in spec.N_list or (cfg.fso_realizations_N,):
            c = replace(cfg, fso_realizations_N=N)
            sub = replace(spec, methods=spec.methods & (SIMULATION | {"clt_quadrature"}))
            pts += _points_generic(sub, f"{scn}:N={N}", c, spec.fso, range(1, c.max_rounds_M + 1))
        return pts
    if s == "fig4to6_lemma_bounds":
        pts = []
        for fso in spec.fso_list or (spec.fso,):
            pts += _points_generic(spec, f"{scn}:{_dist_tag(fso)}", cfg, fso, range(1, cfg.max_rounds_M + 1))
        return pts
    if s == "fig7_small_n":
        sub = replace(spec, methods=spec.methods & (SIMULATION | BOUNDS))
        return _points_generic(sub, scn, cfg, spec.fso, range(1, cfg.max_rounds_M + 1), with_bounds=True)
    if s == "fig8_harq_depth":
        Ms = spec.M_list or tuple(range(1, cfg.max_rounds_M + 1))
        c = replace(cfg, max_rounds_M=max(Ms))
        sub = replace(spec, methods=spec.methods & (SIMULATION | {"clt_quadrature", "lemma1"}))
        return _points_generic(sub, scn, c, spec.fso, Ms)
    if s == "fig9_rate_sweep":
        return _points_fig9(replace(spec, methods=spec.methods & (SIMULATION | {"clt_quadrature"})))
    if s == "fig10_rf_vs_fso_vs_joint":
        return _points_fig10(spec)
    if s == "fig11_power_alloc":
        return _points_fig11(spec)
    with_bounds = isinstance(spec.fso, GammaGamma)
    return _points_generic(spec, scn, cfg, spec.fso, range(1, cfg.max_rounds_M + 1), with_bounds=with_bounds)


# ----------------------------------------------------------------- running

def run(spec: ExperimentSpec, workers: int = 1) -> RunResult:
    """Evaluate every point of ``spec``; failures become error rows."""
    points = _build_points(spec)
    base = RngStream(spec.seed)

    def go(i):
        pt = points[i]
        try:
            return pt.work(base.spawn(i)), None
        except (ArithmeticError, FloatingPointError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            msg = f"{type(exc).__name__}: {exc}".replace(",", ";").replace("\n", " ")
            return [ResultRow(pt.scenario, pt.snr_db, "error", 0, "error", float("nan"), error=msg)], msg

    if workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(go, range(len(points))))
    else:
        parts = [go(i) for i in range(len(points))]
    rows = [r for p in parts for r in p[0]]
    errors = [p[1] for p in parts if p[1]]
    return RunResult(rows, find_violations(rows), errors)


# Bound orderings checked on every run. Deterministic bounds use a 1e-9
# slack; comparisons against Monte Carlo use two ci95 half-widths (about
# four standard errors).
_DET_ORDER = (("lemma2", "clt_quadrature"), ("clt_quadrature", "lemma3"),
              ("lemma4", "clt_quadrature"), ("clt_quadrature", "lemma5"))
_MC_ORDER = (("lower_jensen", "mc"), ("mc", "upper_minkowski"))


def find_violations(rows: Sequence[ResultRow]) -> list[str]:
    table: dict[tuple, dict[str, ResultRow]] = {}
    for r in rows:
        if r.metric == "outage":
            table.setdefault((r.scenario, r.snr_db, r.m), {})[r.method] = r
    out = []
    for key, by in table.items():
        for lo, hi in _DET_ORDER:
            if lo in by and hi in by and by[lo].value > by[hi].value + 1e-9:
                out.append(f"{key}: {lo}={by[lo].value:.6g} > {hi}={by[hi].value:.6g}")
        for lo, hi in _MC_ORDER:
            if lo in by and hi in by:
                tol = 2.0 * (by[lo].ci95 + by[hi].ci95)
                n = max(by[lo].trials, by[hi].trials)
                if n:
                    # same floor as MonteCarloEstimate.tolerance
                    tol += 1.96 ** 2 / n
                if by[lo].value > by[hi].value + tol:
                    out.append(f"{key}: {lo}={by[lo].value:.6g} > {hi}={by[hi].value:.6g} (tol {tol:.3g})")
    return out


# ------------------------------------------------------------------ output

def rows_to_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow(r.csv_fields())
    return buf.getvalue()


def rows_to_gnuplot(rows: Sequence[ResultRow]) -> str:
    """One data block per curve, separated by two blank lines (gnuplot ``index``)."""
    blocks: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        blocks.setdefault((r.scenario, r.method, r.m, r.metric), []).append(r)
    out = []
    for (scn, method, m, metric), rs in blocks.items():
        lines = [f"# scenario={scn} method={method} m={m} metric={metric}", "# snr_db value ci95"]
        lines += [f"{_fmt(r.snr_db)} {_fmt(r.value)} {_fmt(r.ci95)}" for r in rs]
        out.append("\n".join(lines))
    return ("\n\n\n".join(out) + "\n") if out else ""


# ------------------------------------------------------------------ report

def snr_at_outage(snr: Sequence[float], outage: Sequence[float], target: float) -> float | None:
    """SNR where an outage curve crosses ``target``, by log-linear interpolation.

    Only segments on which the outage strictly decreases are used; the first
    crossing wins. Returns None when the curve never crosses.
    """
    for (s0, p0), (s1, p1) in zip(zip(snr, outage), zip(snr[1:], outage[1:])):
        if not (p0 > p1 > 0):
            continue
        if p0 >= target >= p1:
            l0, l1, lt = math.log(p0), math.log(p1), math.log(target)
            return s0 + (s1 - s0) * (l0 - lt) / (l0 - l1)
    return None


def _curves(rows):
    curves: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        if r.method != "error":
            curves.setdefault((r.scenario, r.method, r.m, r.metric), []).append(r)
    for k in curves:
        curves[k].sort(key=lambda r: r.snr_db)
    return curves


def _local_maxima(values: Sequence[float]) -> int:
    v = list(values)
    return sum(1 for i in range(1, len(v) - 1) if v[i] > v[i - 1] and v[i] >= v[i + 1])


def compare_report(rows: Sequence[ResultRow], targets=(1e-2, 1e-3)) -> tuple[str, dict]:
    """Human-readable comparison plus a machine-readable summary.

    Covers method disagreement against the reference method of each curve
    family (Monte Carlo when present), bound-ordering violations, SNRs at
    the target outage levels, the M=1 -> M=2 HARQ gain and throughput local
    maxima over the code rate.
    """
    if not rows:
        return "", {}
    curves = _curves(rows)
    summary: dict = {"disagreement": {}, "violations": find_violations(rows), "snr_at_outage": {},
                     "harq_gain": {}, "rate_local_maxima": {}}
    lines = []

    by_point: dict[tuple, dict[str, ResultRow]] = {}
    for r in rows:
        if r.method != "error":
            by_point.setdefault((r.scenario, r.snr_db, r.m, r.metric), {})[r.method] = r
    for (scn, snr, m, metric), by in sorted(by_point.items(), key=lambda kv: (kv[0][0], kv[0][3], kv[0][2], kv[0][1])):
        ref = "mc" if "mc" in by else ("clt_quadrature" if "clt_quadrature" in by else None)
        if ref is None or len(by) < 2:
            continue
        for meth, r in by.items():
            if meth == ref:
                continue
            d = abs(r.value - by[ref].value)
            key = f"{scn}|{meth}|m={m}|{metric}"
            summary["disagreement"][key] = max(summary["disagreement"].get(key, 0.0), d)
    if summary["disagreement"]:
        lines.append("max |method - reference| per curve:")
        for k, v in summary["disagreement"].items():
            lines.append(f"  {k}: {v:.3g}")

    lines.append(f"bound-ordering violations: {len(summary['violations'])}")
    lines += [f"  {v}" for v in summary["violations"]]

    for (scn, meth, m, metric), rs in curves.items():
        if metric != "outage":
            continue
        for t in targets:
            s = snr_at_outage([r.snr_db for r in rs], [r.value for r in rs], t)
            if s is not None:
                summary["snr_at_outage"][f"{scn}|{meth}|m={m}|{t:g}"] = s
    if summary["snr_at_outage"]:
        lines.append("SNR (dB) at target outage:")
        for k, v in summary["snr_at_outage"].items():
            lines.append(f"  {k}: {v:.2f}")

    # dB gaps between the fig10 families, per method and target
    fams = {}
    for k, v in summary["snr_at_outage"].items():
        scn, meth, m, t = k.split("|")
        if ":" in scn:
            base, variant = scn.rsplit(":", 1)
            fams.setdefault((base, meth, m, t), {})[variant] = v
    for (base, meth, m, t), vs in fams.items():
        if {"joint", "rf_only", "fso_only"} <= set(vs):
            g = {"vs_rf_only": vs["rf_only"] - vs["joint"], "vs_fso_only": vs["fso_only"] - vs["joint"]}
            summary.setdefault("joint_gain_db", {})[f"{base}|{meth}|{m}|{t}"] = g
            lines.append(f"joint gain at outage {t} ({meth}): {g['vs_rf_only']:.2f} dB vs RF only, "
                         f"{g['vs_fso_only']:.2f} dB vs FSO only")

    # HARQ gains from M=1 to M=2 (and later steps)
    for (scn, meth, m, metric), rs in curves.items():
        if m != 1:
            continue
        steps = []
        prev = rs
        for M in range(2, 9):
            nxt = curves.get((scn, meth, M, metric))
            if not nxt:
                break
            a = {r.snr_db: r.value for r in prev}
            b = {r.snr_db: r.value for r in nxt}
            common = sorted(set(a) & set(b))
            # absolute gain: relative outage ratios saturate once both curves reach ~0
            sign = 1.0 if metric == "throughput" else -1.0
            steps.append(max((sign * (b[s] - a[s]) for s in common), default=0.0))
            prev = nxt
        if steps:
            summary["harq_gain"][f"{scn}|{meth}|{metric}"] = steps
            best = int(np.argmax(steps)) + 1
            lines.append(f"{scn} {meth} {metric}: largest improvement from M={best} to M={best + 1} "
                         f"({', '.join(f'{x:.3g}' for x in steps)})")

    # throughput local maxima over R (fig9 style scenario ids "...:R=x")
    rate_curves: dict[tuple, list[tuple[float, float]]] = {}
    for (scn, meth, m, metric), rs in curves.items():
        if metric == "throughput" and ":R=" in scn:
            base, rtxt = scn.rsplit(":R=", 1)
            for r in rs:
                rate_curves.setdefault((base, meth, m, r.snr_db), []).append((float(rtxt), r.value))
    for (base, meth, m, snr), pts in sorted(rate_curves.items()):
        pts.sort()
        n = _local_maxima([v for _, v in pts])
        summary["rate_local_maxima"][f"{base}|{meth}|m={m}|snr={_fmt(snr)}"] = n
    if summary["rate_local_maxima"]:
        lines.append("throughput local maxima over R:")
        for k, v in summary["rate_local_maxima"].items():
            lines.append(f"  {k}: {v}")
    return "\n".join(lines) + "\n", summary
