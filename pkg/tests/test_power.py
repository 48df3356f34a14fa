import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from rffso import harq, power
from rffso.channels import Exponential, GammaGamma, LogNormal, Rayleigh, RngStream
from rffso.harq import HarqConfig, PowerSplit, db_to_linear
from rffso.power import AllocationResult, NumericError

FIG11 = HarqConfig(5.0, 2, 20)


def P(db):
    return float(db_to_linear(db))


class TestRules:
    def test_uniform(self):
        assert power.uniform_split(2.0) == PowerSplit(1.0, 1.0)
        assert power.uniform_split(1e3) == PowerSplit(500.0, 500.0)
        with pytest.raises(ValueError):
            power.uniform_split(0.0)

    def test_low_snr_rule(self):
        assert power.low_snr_rule(0.1, 5.0, 2, 1.0) == PowerSplit(0.1, 0.0)
        assert power.low_snr_rule(1.0, 0.1, 2, 1.0) == PowerSplit(0.0, 1.0)
        assert power.low_snr_rule(1.0, 2.0, 2, 1.0) == PowerSplit(1.0, 0.0)
        with pytest.raises(ValueError):
            power.low_snr_rule(1.0, 1.0, 0, 1.0)

    def test_low_snr_outage(self):
        assert power.low_snr_outage(PowerSplit(0.0, 3.0), 3.0, 4.0, 2, 1.0) == 0.0
        assert power.low_snr_outage(PowerSplit(0.0, 1.0), 1.0, 4.0, 2, 1.0) == 1.0
        assert power.low_snr_outage(PowerSplit(2.0, 0.0), 2.0, 4.0, 2, 1.0) == pytest.approx(1 - math.exp(-1))

    def test_boundary_rule_matches_direct_evaluation(self):
        rng = np.random.default_rng(2024)
        for _ in range(50):
            p, R, mu = 10 ** rng.uniform(-2, 1), 10 ** rng.uniform(-2, 1), 10 ** rng.uniform(-1, 1)
            M = int(rng.integers(1, 5))
            rf, fso = PowerSplit(p, 0.0), PowerSplit(0.0, p)
            o_rf = power.low_snr_outage(rf, p, R, M, mu)
            o_fso = power.low_snr_outage(fso, p, R, M, mu)
            chosen = power.low_snr_rule(p, R, M, mu)
            assert power.low_snr_outage(chosen, p, R, M, mu) == min(o_rf, o_fso)
            if o_rf != o_fso:
                assert chosen == (rf if o_rf < o_fso else fso)

    @given(st.floats(0.01, 10), st.floats(0.01, 10), st.integers(1, 4), st.floats(0.1, 10))
    def test_boundary_rule_property(self, p, R, M, mu):
        # at an exact tie the rule's >= branch picks RF while FSO-only already reaches zero outage
        assume(abs(R - M * p * mu) > 1e-9 * R)
        chosen = power.low_snr_rule(p, R, M, mu)
        both = [power.low_snr_outage(s, p, R, M, mu) for s in (PowerSplit(p, 0), PowerSplit(0, p))]
        assert power.low_snr_outage(chosen, p, R, M, mu) == min(both)


class TestGridOptimize:
    def test_toy(self):
        res = power.grid_optimize(10.0, lambda s: (s.p_rf / s.total - 0.3) ** 2)
        assert res.ratio == pytest.approx(0.3, abs=0.01) and res.method == "grid"
        assert res.split.total == pytest.approx(10.0, rel=1e-12)

    def test_low_snr_objective_picks_rf(self):
        res = power.grid_optimize(0.1, lambda s: power.low_snr_outage(s, 0.1, 5.0, 2, 1.0))
        assert res.ratio == 1.0

    def test_non_finite(self):
        with pytest.raises(NumericError):
            power.grid_optimize(1.0, lambda s: math.nan)

    def test_arguments(self):
        with pytest.raises(ValueError):
            power.grid_optimize(1.0, lambda s: 0.0, grid_points=2)
        with pytest.raises(ValueError):
            power.grid_optimize(10.0, lambda s: 0.0, caps=(2.0, 2.0))
        with pytest.raises(ValueError):
            AllocationResult(PowerSplit(1, 1), 0.0, "guess")

    def test_caps(self):
        res = power.grid_optimize(10.0, lambda s: -s.p_rf, caps=(4.0, 10.0))
        assert res.split.p_rf == pytest.approx(4.0)

    @given(st.lists(st.floats(-5, 5), min_size=4, max_size=4), st.integers(3, 40))
    @settings(max_examples=60, deadline=None)
    def test_never_worse_than_candidates(self, c, n):
        f = lambda s: float(np.polyval(c, s.p_rf / s.total) + math.sin(7 * s.p_rf / s.total))
        res = power.grid_optimize(3.0, f, grid_points=n)
        for r in (0.0, 0.5, 1.0):
            assert res.objective <= f(PowerSplit(3.0 * r, 3.0 * (1 - r))) + 1e-15

    def test_workers_identical(self):
        obj = power.clt_outage_objective(FIG11, Exponential(1.0))
        a = power.grid_optimize(P(15), obj, grid_points=21)
        b = power.grid_optimize(P(15), obj, grid_points=21, workers=3)
        assert a == b


class TestObjectives:
    @pytest.mark.parametrize("fso, snr, N", [(Exponential(1.0), 10, 20), (LogNormal(-0.5, 1.0), 15, 5),
                                             (GammaGamma(4.3939, 2.5636), 20, 1)], ids=str)
    def test_exact_outage_matches_monte_carlo(self, fso, snr, N):
        cfg, pw = HarqConfig(5.0, 2, N), PowerSplit.from_db(snr, 0.4)
        res = harq.mc_decoding_profile(cfg, pw, Rayleigh(), fso, 1_000_000, RngStream(12))
        assert abs(power.outage_exact(cfg, pw, fso) - res.outage.value) <= res.outage.tolerance(3)

    def test_single_link_limits(self):
        cfg = HarqConfig(3.0, 1, 4)
        rf_only = power.outage_exact(cfg, PowerSplit(10.0, 0.0), Exponential(1.0))
        assert rf_only == pytest.approx(-math.expm1(-math.expm1(3.0) / 10.0))

    @pytest.mark.parametrize("snr", [30, 40, 50])
    def test_uniform_optimal_single_realization(self, snr):
        # one FSO draw per packet and one round: RF and FSO have equal diversity
        res = power.grid_optimize(P(snr), power.exact_outage_objective(HarqConfig(5.0, 1, 1), Exponential(1.0)))
        assert res.ratio == pytest.approx(0.5, abs=0.01)

    def test_low_rf_share_for_strong_rf(self):
        # small lambda_RF: the minimum outage uses little RF power
        lam = 0.05
        base = power.clt_outage_objective(FIG11, Exponential(1.0))
        res = power.grid_optimize(P(20), lambda s: base(PowerSplit(s.p_rf / lam, s.p_fso)))
        assert res.ratio < 0.5

    @pytest.mark.xfail(strict=True, reason="with N=20 FSO averaging the optimum drifts to the minimum RF share")
    @pytest.mark.parametrize("fso", [Exponential(1.0), LogNormal(0.0, 1.0)], ids=str)
    def test_uniform_optimal_at_40db(self, fso):
        res = power.grid_optimize(P(40), power.clt_outage_objective(FIG11, fso))
        assert res.ratio == pytest.approx(0.5, abs=0.05)

    @pytest.mark.xfail(strict=True, reason="the optimal RF share moves away from 0.5 as power grows")
    def test_ratio_approaches_uniform(self):
        obj = power.clt_outage_objective(FIG11, Exponential(1.0))
        d = [abs(power.grid_optimize(P(s), obj).ratio - 0.5) for s in (30, 40, 50)]
        assert d[0] >= d[1] >= d[2]
