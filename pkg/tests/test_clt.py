import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rffso import clt, harq
from rffso.channels import Exponential, GammaGamma, LogNormal, Rayleigh, RngStream
from rffso.clt import CltMoments, Lemma3Epsilon
from rffso.harq import HarqConfig, PowerSplit

A, B = 4.3939, 2.5636
BOUNDS = (clt.lemma1_F, clt.lemma2_V, clt.lemma3_T, clt.lemma4_R, clt.lemma5_S)


def fig4(snr_db, dist=Exponential(1.0)):
    pw = PowerSplit.from_db(snr_db)
    return clt.moments_numeric(dist, pw.p_fso), pw.p_rf


def sandwich_gap(u, m, N, mom, p):
    f = clt.cdf_clt(u, m, N, mom, p)
    eps = clt.epsilon_tune(m, N, mom, p, u)
    return min(f - clt.lemma2_V(u, m, N, mom, p), clt.lemma3_T(u, m, N, mom, p, eps) - f,
               f - clt.lemma4_R(u, m, N, mom, p), clt.lemma5_S(u, m, N, mom, p) - f)


class TestMomentsExponential:
    def test_vanishing_power(self):
        mom = clt.moments_exponential(1.0, 1e-12)
        assert mom.mu < 1e-11 and mom.sigma2 < 1e-20

    def test_oracle_values(self, oracles):
        for key, lam, p in (("exp_l1_p1", 1, 1), ("exp_l1_p10", 1, 10), ("exp_l2_p3", 2, 3)):
            mu, s2 = oracles["moments"][key]
            mom = clt.moments_exponential(lam, p)
            assert mom.mu == pytest.approx(mu, rel=1e-9)
            assert mom.sigma2 == pytest.approx(s2, rel=1e-8)
        assert clt.moments_exponential(1, 1).mu == pytest.approx(0.596347, abs=1e-6)
        assert clt.moments_exponential(1, 10).mu == pytest.approx(2.01463, abs=2e-5)

    @given(st.floats(0.05, 20), st.floats(-2, 5))
    @settings(max_examples=40, deadline=None)
    def test_closed_form_matches_quadrature(self, lam, logp):
        p = 10 ** logp
        a, b = clt.moments_exponential(lam, p), clt.moments_numeric(Exponential(lam), p)
        assert a.mu == pytest.approx(b.mu, rel=1e-6)
        assert a.sigma2 == pytest.approx(b.sigma2, rel=1e-6, abs=1e-300)

    def test_detection_constant(self):
        c = harq.IMDD_C
        assert clt.moments_exponential(1.0, 10.0, c).mu == pytest.approx(clt.moments_exponential(1.0, 10.0 * c).mu)


class TestMomentsLogNormal:
    def test_degenerate(self):
        assert clt.moments_lognormal(0.0, 1e-4, 1.0).mu == pytest.approx(math.log(2), rel=1e-6)
        assert clt.moments_lognormal(0.0, 1.0, 0.0) == CltMoments(0.0, 0.0, "linearized")

    def test_reference_attached(self, oracles):
        mom = clt.moments_lognormal(0.0, 1.0, 1.0)
        mu, s2 = oracles["moments"]["ln_v0_d1_p1"]
        assert mom.reference.mu == pytest.approx(mu, rel=1e-9)
        assert mom.reference.sigma2 == pytest.approx(s2, rel=1e-8)

    def test_linearized_value(self):
        # frozen output of the surrogate; the line through the median clips at 0 and 1
        mom = clt.moments_lognormal(0.0, 1.0, 1.0)
        assert mom.mu == pytest.approx(0.6321386652534995, rel=1e-10)

    @pytest.mark.xfail(strict=True, reason="the linearized surrogate is 22% low at delta=1 (0.632 vs 0.806)")
    def test_within_five_percent(self):
        mom = clt.moments_lognormal(0.0, 1.0, 1.0)
        assert mom.mu == pytest.approx(mom.reference.mu, rel=0.05)

    def test_accurate_for_mild_turbulence(self):
        mom = clt.moments_lognormal(-0.02, 0.2, 10.0)
        assert mom.mu == pytest.approx(mom.reference.mu, rel=0.01)


class TestMomentsGammaGamma:
    def test_vanishing_power(self):
        m = clt.moments_gammagamma(A, B, 0.0)
        assert (m.mu, m.sigma2) == (0.0, 0.0)

    def test_reference(self, oracles):
        mu, s2 = oracles["moments"]["gg_rytov1_p10"]
        ref = clt.moments_gammagamma(A, B, 10.0).reference
        assert ref.mu == pytest.approx(mu, rel=1e-9) and ref.sigma2 == pytest.approx(s2, rel=1e-8)

    @pytest.mark.xfail(strict=True, reason="log(1+Px) -> log(Px) above xi costs about 7% of the mean at P=10")
    def test_mean_within_two_percent(self, oracles):
        assert clt.moments_gammagamma(A, B, 10.0).mu == pytest.approx(oracles["moments"]["gg_rytov1_p10"][0], rel=0.02)

    @pytest.mark.xfail(strict=True, reason="variance error of the expansion is about 24% at P=10")
    def test_variance_within_five_percent(self, oracles):
        assert clt.moments_gammagamma(A, B, 10.0).sigma2 == pytest.approx(oracles["moments"]["gg_rytov1_p10"][1], rel=0.05)

    def test_frozen_output(self):
        mom = clt.moments_gammagamma(A, B, 10.0)
        assert mom.method == "expansion(xi=0.1)"
        assert mom.mu == pytest.approx(2.0046711723018715, rel=1e-9)

    def test_fixed_knobs_and_equal_shapes(self):
        mom = clt.moments_gammagamma(3.0, 3.0, 100.0, knobs=clt.AppendixXi(0.01, 4))
        assert math.isfinite(mom.mu) and mom.method.startswith("expansion")
        with pytest.raises(ValueError):
            clt.AppendixXi(0.0)


class TestMomentsNumeric:
    def test_zero_power(self):
        for d in (Exponential(1.0), LogNormal(0.0, 1.0), GammaGamma(A, B)):
            m = clt.moments_numeric(d, 0.0)
            assert (m.mu, m.sigma2) == (0.0, 0.0)

    def test_point_mass(self):
        assert clt.moments_numeric(LogNormal(0.0, 1e-4), 3.0).mu == pytest.approx(math.log(4), rel=1e-6)

    def test_moments_for(self):
        assert clt.moments_for(Exponential(1.0), 1.0, method="closed").method == "closed"
        assert clt.moments_for(LogNormal(0, 1), 1.0, method="closed").method == "linearized"

    def test_scaled(self):
        m = CltMoments(2.0, 0.5).scaled(3.0)
        assert (m.mu, m.sigma2) == (6.0, 4.5)
        with pytest.raises(ValueError):
            CltMoments(-1.0, 0.0)


class TestCdfClt:
    def test_edges(self):
        mom = clt.moments_exponential(1.0, 1.0)
        assert clt.cdf_clt(0.0, 1, 5, mom, 1.0) == 0.0
        u = mom.mu + 40 * mom.sigma + 40
        assert 0.999 <= clt.cdf_clt(u, 1, 5, mom, 1.0) <= 1.0

    def test_matches_monte_carlo(self):
        # R=5, m=1, N=50, exponential FSO, 10 dB uniform
        cfg, pw = HarqConfig(5.0, 1, 50), PowerSplit.from_db(10.0)
        res = harq.mc_decoding_profile(cfg, pw, Rayleigh(), Exponential(1.0), 1_000_000, RngStream(2))
        ref = clt.cdf_clt(5.0, 1, 50, clt.moments_exponential(1.0, pw.p_fso), pw.p_rf)
        assert abs(res.outage.value - ref) <= 2 * res.outage.half_width_95

    @given(st.floats(0.01, 8), st.floats(0.01, 3), st.integers(1, 3), st.integers(1, 100), st.floats(-1, 4))
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_u(self, u, du, m, N, logp):
        p = 10 ** logp
        mom = clt.moments_exponential(1.0, p)
        assert clt.cdf_clt(u, m, N, mom, p) <= clt.cdf_clt(u + du, m, N, mom, p) + 1e-10

    def test_decreasing_in_N(self):
        # outage at R/M shrinks with more FSO realizations over the plotted range
        checked = 0
        for snr in range(0, 31, 5):
            mom, p = fig4(snr)
            if 2.0 >= mom.mu + math.log1p(p):
                continue
            vals = [clt.cdf_clt(2.0, 2, N, mom, p) for N in (1, 5, 50)]
            assert vals[0] >= vals[1] >= vals[2]
            checked += 1
        assert checked >= 5


class TestLemmas:
    def test_zero_rate(self):
        mom, p = fig4(10)
        for f in BOUNDS:
            assert f(0.0, 1, 50, mom, p) == 0.0

    @pytest.mark.parametrize("snr", [5, 10, 15])
    def test_lemma1_fig4(self, snr):
        mom, p = fig4(snr)
        assert abs(clt.lemma1_F(5.0, 1, 50, mom, p) - clt.cdf_clt(5.0, 1, 50, mom, p)) <= 0.02

    def test_lemma1_second_order(self):
        for snr in (5, 10, 20):
            mom, p = fig4(snr)
            for u in (1.0, 2.5, 4.0):
                assert abs(clt.lemma1_F(u, 1, 10_000, mom, p) - clt.lemma1_F_second_order(u, mom, p)) <= 1e-3

    def test_second_order_is_a_cdf(self):
        mom = CltMoments(1.0, 0.1)
        vals = [clt.lemma1_F_second_order(u, mom, 2.0) for u in np.linspace(0, 8, 50)]
        assert all(0 <= v <= 1 for v in vals) and vals == sorted(vals)

    @pytest.mark.parametrize("dist", [Exponential(1.0), LogNormal(-0.5, 1.0), GammaGamma(A, B)], ids=repr)
    def test_sandwich_grid(self, dist):
        rng = np.random.default_rng(17)
        worst = math.inf
        for _ in range(100):
            snr = rng.uniform(-5, 35)
            m = int(rng.integers(1, 4))
            mom, p = fig4(snr, dist)
            u = 5.0 / m * rng.uniform(0.3, 1.5)
            worst = min(worst, sandwich_gap(u, m, 50, mom, p))
        assert worst >= -1e-9

    @given(st.floats(0.05, 6), st.integers(1, 3), st.integers(1, 200), st.floats(-1.5, 3.5), st.floats(-1.5, 3.5))
    @settings(max_examples=80, deadline=None)
    def test_sandwich_property(self, u, m, N, lp_rf, lp_fso):
        mom = clt.moments_exponential(1.0, 10 ** lp_fso)
        assert sandwich_gap(u, m, N, mom, 10 ** lp_rf) >= -1e-9

    def test_fig4_curve_ordering(self):
        for snr in np.arange(0, 31, 2.5):
            mom, p = fig4(snr)
            for m in (1, 2):
                u = 5.0 / m
                f = clt.cdf_clt(u, m, 50, mom, p)
                assert clt.lemma2_V(u, m, 50, mom, p) <= f + 1e-9
                assert clt.lemma5_S(u, m, 50, mom, p) >= f - 1e-9

    def test_lemma3_epsilon_zero(self):
        mom, p = fig4(10)
        t0 = clt.lemma3_T(5.0, 1, 50, mom, p, Lemma3Epsilon(0.0))
        head = clt.q_function(math.sqrt(50) * (mom.mu - 5) / mom.sigma) - \
            math.exp(-math.expm1(5) / p) * clt.q_function(math.sqrt(50) * mom.mu / mom.sigma)
        assert t0 == pytest.approx(min(1.0, head), abs=1e-15)
        assert t0 >= clt.cdf_clt(5.0, 1, 50, mom, p)

    @pytest.mark.parametrize("snr", [15, 20, 25, 30])
    def test_lemma3_tuned_gap(self, snr):
        mom, p = fig4(snr)
        eps = clt.epsilon_tune(1, 50, mom, p, 5.0)
        assert clt.lemma3_T(5.0, 1, 50, mom, p, eps) - clt.cdf_clt(5.0, 1, 50, mom, p) <= 0.1

    def test_lemma4_low_rf_power(self):
        for p_fso in (0.1, 1.0, 10.0):
            mom = clt.moments_exponential(1.0, p_fso)
            assert abs(clt.lemma4_R(5.0, 1, 50, mom, 0.1) - clt.cdf_clt(5.0, 1, 50, mom, 0.1)) <= 0.01

    def test_lemma5_below_mean(self):
        mom, p = fig4(20)
        u = 0.9 * mom.mu
        assert clt.lemma5_S(u, 1, 50, mom, p) >= clt.cdf_clt(u, 1, 50, mom, p) - 1e-12

    @given(st.floats(-50, 50), st.integers(1, 4), st.integers(1, 500), st.floats(0, 20), st.floats(0, 5),
           st.floats(1e-6, 1e6))
    @settings(max_examples=80, deadline=None)
    def test_clamped_and_finite(self, u, m, N, mu, s2, p):
        mom = CltMoments(mu, s2)
        for f in BOUNDS:
            v = f(u, m, N, mom, p)
            assert math.isfinite(v) and 0.0 <= v <= 1.0


class TestEpsilonTune:
    def test_degenerate(self):
        assert clt.epsilon_tune(1, 50, CltMoments(1.0, 0.0), 3.0, 2.0).epsilon == 0.0

    def test_bad_target(self):
        with pytest.raises(ValueError):
            clt.epsilon_tune(1, 50, CltMoments(1.0, 0.1), 3.0, 0.0)
        with pytest.raises(ValueError):
            Lemma3Epsilon(-0.1)

    @pytest.mark.parametrize("snr", [10, 20, 30])
    def test_minimizer(self, snr):
        mom, p = fig4(snr)
        eps = clt.epsilon_tune(1, 50, mom, p, 5.0)
        upper = 10 * mom.sigma2 / 50
        t = lambda e: clt.lemma3_T(5.0, 1, 50, mom, p, Lemma3Epsilon(e))
        tuned = t(eps.epsilon)
        assert tuned <= t(0.0) and tuned <= t(upper)
        assert tuned >= clt.cdf_clt(5.0, 1, 50, mom, p) - 1e-12

    def test_strictly_tighter_on_fig4(self):
        mom, p = fig4(20)
        eps = clt.epsilon_tune(1, 50, mom, p, 5.0)
        assert clt.lemma3_T(5.0, 1, 50, mom, p, eps) < clt.lemma3_T(5.0, 1, 50, mom, p, Lemma3Epsilon(0.0))


class TestMetricsFromCdf:
    def test_constant(self):
        assert clt.metrics_from_cdf(lambda u, m: 0.0, 4.0, 3) == (4.0, 0.0)
        assert clt.metrics_from_cdf(lambda u, m: 1.0, 4.0, 3) == (0.0, 1.0)

    def test_lemma1_fig8_throughput(self):
        cfg, pw = HarqConfig(6.0, 4, 100), PowerSplit.from_db(20.0)
        mom = clt.moments_exponential(1.0, pw.p_fso)
        res = harq.mc_decoding_profile(cfg, pw, Rayleigh(), Exponential(1.0), 200_000, RngStream(7))
        for M in (1, 2, 3, 4):
            eta, _ = clt.metrics_from_cdf(lambda u, m: clt.lemma1_F(u, m, 100, mom, pw.p_rf), 6.0, M)
            assert abs(eta - harq.throughput(res.profile.probs[:M], 6.0)) <= 0.05
