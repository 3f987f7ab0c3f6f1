"""Monte Carlo engine: determinism, model fidelity, oracle agreement."""

import numpy as np
import pytest

from agebid import (CompetitionModel, ConstantPolicy, EnvParams,
                    GreedyPolicy, ShadingPolicy, SimConfig, ValueCurve,
                    compare_policies, estimate_value, policy_value_quadrature,
                    run_episode, time_average)
from agebid.sim import PolicyCase, _run_batch


class TestEpisodes:
    def test_zero_bid_never_wins(self, uniform01, kexp):
        cfg = SimConfig(seed=1, n_reps=1, mode="discounted")
        ep = run_episode(ConstantPolicy(0.0), EnvParams(2.0, 0.1),
                         uniform01, kexp, cfg, 0)
        assert ep.wins == 0
        assert ep.payoff == 0.0
        assert ep.spend == 0.0
        assert ep.final_age > 0

    def test_certain_win_counts_all_auctions(self, kexp):
        # competition supported on [0, 0.2]; a constant bid of 1 wins always
        comp = CompetitionModel.piecewise_linear_cdf([(0.0, 0.0), (0.2, 1.0)])
        cfg = SimConfig(seed=7, n_reps=64, mode="time_average", T=400.0,
                        warmup=0.0)
        mu = 2.0
        parts = _run_batch(ConstantPolicy(1.0), EnvParams(mu, 0.0), comp,
                           ValueCurve.constant(1.0), cfg, list(range(64)))
        payoff, wins, spend, _ = parts
        rate = wins.sum() / (64 * 400.0)
        assert rate == pytest.approx(mu, rel=0.02)  # every arrival won
        assert spend.sum() / wins.sum() == pytest.approx(0.1, abs=0.005)
        assert np.allclose(payoff, (wins * 1.0 - spend) / 400.0)

    def test_episode_deterministic_and_batch_independent(self, uniform01, kexp):
        cfg = SimConfig(seed=11, n_reps=16, mode="time_average", T=50.0)
        env = EnvParams(3.0, 0.0)
        pol = GreedyPolicy(kexp)
        singles = [run_episode(pol, env, uniform01, kexp, cfg, i)
                   for i in range(8)]
        batch = _run_batch(pol, env, uniform01, kexp, cfg, list(range(8)))
        shuffled = _run_batch(pol, env, uniform01, kexp, cfg, [5, 2, 7])
        for i, ep in enumerate(singles):
            assert ep.payoff == batch[0][i]
            assert ep.wins == batch[1][i]
        assert shuffled[0][0] == singles[5].payoff
        assert shuffled[0][1] == singles[2].payoff
        assert shuffled[0][2] == singles[7].payoff

    def test_discounted_constant_curve_anchor(self, uniform01):
        # stationary value mu pi(K) / gamma within 3 standard errors
        curve = ValueCurve.constant(1.0)
        env = EnvParams(1.0, 0.1)
        cfg = SimConfig(seed=42, n_reps=30_000, mode="discounted")
        est = estimate_value(GreedyPolicy(curve), env, uniform01, curve, cfg)
        assert abs(est.mean - 5.0) <= 3 * est.std_err

    def test_geometric_win_count(self, uniform01):
        # constant curve and bid: wins before the horizon follow a geometric
        # law; the mean must match the quadrature expectation
        curve = ValueCurve.constant(1.0)
        env = EnvParams(1.0, 0.1)
        pol = ConstantPolicy(0.5)
        cfg = SimConfig(seed=3, n_reps=20_000, mode="discounted")
        parts = _run_batch(pol, env, uniform01, curve, cfg,
                           list(range(cfg.n_reps)))
        wins = parts[1]
        ev = policy_value_quadrature(pol, env, uniform01, curve)
        se = wins.std(ddof=1) / np.sqrt(len(wins))
        assert abs(wins.mean() - ev.expected_wins) <= 3 * se
        # mu q / gamma for this configuration is 5
        assert ev.expected_wins == pytest.approx(5.0, rel=1e-6)


class TestEstimates:
    def test_reproducible(self, uniform01, kexp):
        cfg = SimConfig(seed=21, n_reps=100, mode="time_average", T=100.0)
        env = EnvParams(5.0, 0.0)
        a = estimate_value(GreedyPolicy(kexp), env, uniform01, kexp, cfg)
        b = estimate_value(GreedyPolicy(kexp), env, uniform01, kexp, cfg)
        assert a.mean == b.mean
        assert a.ci95 == b.ci95

    def test_time_average_matches_quadrature(self, uniform01, kexp):
        env = EnvParams(5.0, 0.0)
        cfg = SimConfig(seed=31, n_reps=200, mode="time_average")
        est = estimate_value(GreedyPolicy(kexp), env, uniform01, kexp, cfg)
        oracle = time_average(GreedyPolicy(kexp), env, uniform01, kexp)
        assert abs(est.mean - oracle) <= 3 * est.std_err

    def test_discounted_matches_quadrature(self, uniform01, kexp):
        env = EnvParams(5.0, 0.1)
        pol = ShadingPolicy(kexp, 0.8)
        cfg = SimConfig(seed=17, n_reps=30_000, mode="discounted")
        est = estimate_value(pol, env, uniform01, kexp, cfg)
        oracle = policy_value_quadrature(pol, env, uniform01, kexp).v0
        assert abs(est.mean - oracle) <= 3 * est.std_err

    def test_threads_do_not_change_results(self, uniform01, kexp, monkeypatch):
        env = EnvParams(2.0, 0.0)
        cfg = SimConfig(seed=9, n_reps=4100, mode="time_average", T=30.0)
        base = estimate_value(GreedyPolicy(kexp), env, uniform01, kexp, cfg)
        monkeypatch.setenv("AGEBID_THREADS", "4")
        threaded = estimate_value(GreedyPolicy(kexp), env, uniform01, kexp, cfg)
        assert base.mean == threaded.mean


class TestComparePolicies:
    def test_rows(self, uniform01, kexp, khyp):
        cases = [PolicyCase("exp_saturating", 1.0, "greedy",
                            GreedyPolicy(kexp), kexp),
                 PolicyCase("hyperbolic", 2.0, "shaded",
                            ShadingPolicy(khyp, 0.5), khyp)]
        cfg = SimConfig(seed=77, n_reps=40, mode="time_average", T=150.0)
        rows = compare_policies(cases, uniform01, cfg)
        assert len(rows) == 2
        assert rows[0].k_kind == "exp_saturating"
        assert rows[0].policy == "greedy"
        assert rows[0].ci_low < rows[0].value_per_time < rows[0].ci_high
        assert rows[1].seed != rows[0].seed
        oracle = time_average(ShadingPolicy(khyp, 0.5), EnvParams(2.0, 0.0),
                              uniform01, khyp)
        half = 0.5 * (rows[1].ci_high - rows[1].ci_low)
        assert abs(rows[1].value_per_time - oracle) <= 3 * half
