"""Library tour: simulate one operating point and compare it with the CLT tools.

    python3 demos/quickstart.py
"""
from rffso import clt, harq, power
from rffso.channels import Exponential, Rayleigh, RngStream
from rffso.harq import HarqConfig, PowerSplit

cfg = HarqConfig(rate_R=4.0, max_rounds_M=2, fso_realizations_N=50)
pw = PowerSplit.from_db(12.0)  # P_RF = P_FSO = P/2
fso = Exponential(1.0)

res = harq.mc_decoding_profile(cfg, pw, Rayleigh(), fso, trials=200_000, rng=RngStream(1))
print(f"Monte Carlo  outage {res.outage.value:.4e} +/- {res.outage.half_width_95:.1e}, "
      f"throughput {harq.throughput(res.profile, cfg.rate_R):.4f} npcu")

mom = clt.moments_exponential(1.0, pw.p_fso)
N = cfg.fso_realizations_N
for name, f in [("quadrature", clt.cdf_clt), ("lemma 1", clt.lemma1_F), ("lower V", clt.lemma2_V),
                ("lower R", clt.lemma4_R), ("upper S", clt.lemma5_S)]:
    thr, out = clt.metrics_from_cdf(lambda u, m: f(u, m, N, mom, pw.p_rf), cfg.rate_R, cfg.max_rounds_M)
    print(f"{name:<12} outage {out:.4e}, throughput {thr:.4f} npcu")

best = power.grid_optimize(pw.total, power.clt_outage_objective(cfg, fso))
print(f"outage-optimal RF share at 12 dB: {best.ratio:.2f} (outage {best.objective:.3e})")
