#!/usr/bin/env python3
"""
Tests for episodes, repetition batches, confidence intervals and switch points.
"""

from functools import partial

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from catalog import build_block_catalog
from environments import Action, build_synthetic_stochastic
from harness import (REPETITION_COLUMNS, BatchResult, EpisodeTrace, confidence_interval,
                     critical_value, detect_switch_point, keyterm_settle_round, run_batch,
                     run_episode)
from policies import HierUCBPolicy, OraclePolicy, UCBPolicy, build_policy


def synthetic_env(num_keyterms, items_per_keyterm, repetition, seed):
    return build_synthetic_stochastic(num_keyterms, items_per_keyterm, lam=0.5, seed=seed)


def policy_of(kind, env, seed):
    return build_policy(kind, env)


def trace_from_kinds(kinds):
    """Minimal trace from a string such as 'KIKII'."""
    n = len(kinds)
    is_keyterm = np.array([c == 'K' for c in kinds])
    zeros = np.zeros(n)
    return EpisodeTrace("test", 1.0, is_keyterm, np.zeros(n, dtype=np.int64), zeros, zeros,
                        zeros, zeros, np.zeros(n, dtype=np.int8), np.zeros(n, dtype=np.int8),
                        np.full(n, -1))


class TestRunEpisode:

    def test_single_round_is_a_keyterm(self):
        env = build_synthetic_stochastic(2, 2)
        trace = run_episode(env, HierUCBPolicy(env.catalog), 1, seed=0)
        assert trace.horizon == 1
        assert trace.action_at(1) == Action.keyterm(0)
        assert trace.pending[0] == 1

    def test_oracle_has_zero_regret(self):
        env = build_synthetic_stochastic(3, 3)
        policy = OraclePolicy(env.catalog, env.optimal_expected_reward()[1])
        trace = run_episode(env, policy, 200, seed=1)
        assert_array_equal(trace.cum_regret, np.zeros(200))

    def test_regret_accounting(self):
        env = build_synthetic_stochastic(2, 2, lam=0.5)
        trace = run_episode(env, HierUCBPolicy(env.catalog), 300, seed=4)
        assert_allclose(trace.regret_inc, 1.0 - trace.expected_reward)
        assert_allclose(trace.cum_regret, np.cumsum(trace.regret_inc))
        assert np.all(np.diff(trace.cum_regret) >= 0)
        assert trace.keyterm_asks == int(trace.is_keyterm.sum())

    def test_regret_identity(self):
        env = build_synthetic_stochastic(3, 2, lam=0.5)
        optimal, _ = env.optimal_expected_reward()
        for policy in (HierUCBPolicy(env.catalog), UCBPolicy(env.catalog)):
            trace = run_episode(env, policy, 400, seed=8)
            total = trace.cum_regret[-1] + trace.expected_reward.sum()
            assert abs(total - 400 * optimal) <= 1e-9

    def test_switching_and_pending_columns(self):
        env = build_synthetic_stochastic(2, 2)
        trace = run_episode(env, HierUCBPolicy(env.catalog), 300, seed=2)
        # Every ask is followed by the item it left pending.
        asks = np.flatnonzero(trace.is_keyterm[:-1])
        assert np.all(trace.pending[asks] == 1)
        assert not trace.is_keyterm[asks + 1].any()
        assert np.all(trace.switching[trace.is_keyterm] == 0)

    def test_restricted_exploration(self):
        env = build_synthetic_stochastic(2, 3)
        trace = run_episode(env, HierUCBPolicy(env.catalog), 500, seed=3)
        for t in range(1, trace.horizon + 1):
            action = trace.action_at(t)
            if action.is_item:
                assert action.index in env.catalog.members(int(trace.leader[t - 1]))

    def test_catalog_mismatch(self):
        env = build_synthetic_stochastic(2, 2)
        with pytest.raises(ValueError, match="different catalogs"):
            run_episode(env, UCBPolicy(build_block_catalog(3, 3)), 5)

    def test_same_seed_same_trace(self):
        env = build_synthetic_stochastic(2, 2)
        a = run_episode(env, HierUCBPolicy(env.catalog), 200, seed=9)
        b = run_episode(env, HierUCBPolicy(env.catalog), 200, seed=9)
        assert_array_equal(a.action_id, b.action_id)
        assert_array_equal(a.reward, b.reward)

    def test_frame_round_trip(self):
        env = build_synthetic_stochastic(2, 2)
        trace = run_episode(env, HierUCBPolicy(env.catalog), 50, seed=0)
        again = EpisodeTrace.from_frame(trace.to_frame())
        assert again.optimal_reward == trace.optimal_reward
        assert_array_equal(again.is_keyterm, trace.is_keyterm)
        assert_array_equal(again.cum_regret, trace.cum_regret)


class TestRunBatch:

    def test_single_repetition(self):
        result = run_batch(partial(synthetic_env, 2, 2), partial(policy_of, "hier_ucb"), 100, 1,
                           base_seed=5, keep_traces=True)
        assert_array_equal(result.mean_cum_regret, result.traces[0].cum_regret)
        assert_array_equal(result.ci_half_width, np.zeros(100))
        assert result.seeds == [5]

    def test_determinism(self):
        kwargs = dict(horizon=150, repetitions=3, base_seed=11)
        a = run_batch(partial(synthetic_env, 2, 2), partial(policy_of, "ucb"), **kwargs)
        b = run_batch(partial(synthetic_env, 2, 2), partial(policy_of, "ucb"), **kwargs)
        assert_array_equal(a.mean_cum_regret, b.mean_cum_regret)
        assert_array_equal(a.ci_half_width, b.ci_half_width)
        assert a.to_frame().equals(b.to_frame())

    def test_process_pool_matches_serial(self):
        kwargs = dict(horizon=120, repetitions=4, base_seed=3)
        serial = run_batch(partial(synthetic_env, 2, 2), partial(policy_of, "hier_ucb"), **kwargs)
        pooled = run_batch(partial(synthetic_env, 2, 2), partial(policy_of, "hier_ucb"), workers=2, **kwargs)
        assert_array_equal(serial.cum_regret_samples, pooled.cum_regret_samples)
        assert serial.switch_points == pooled.switch_points

    def test_batch_frame_columns(self):
        result = run_batch(partial(synthetic_env, 2, 2), partial(policy_of, "oracle"), 20, 2)
        frame = result.to_frame()
        assert list(frame.columns) == ['round', 'mean_cum_regret', 'ci_low', 'ci_high', 'mean_avg_reward']
        assert result.final_mean_regret == 0.0
        assert isinstance(result, BatchResult)

    def test_ci_matches_normal_interval_of_final_regrets(self):
        result = run_batch(partial(synthetic_env, 2, 2), partial(policy_of, "ucb"), 200, 6, base_seed=2)
        final = result.final_regrets
        low, high = stats.norm.interval(0.95, loc=final.mean(), scale=stats.sem(final))
        assert result.final_ci_half_width == pytest.approx((high - low) / 2, rel=1e-9)
        assert result.ci_low[-1] == pytest.approx(low, rel=1e-9)

    def test_repetition_frame(self):
        result = run_batch(partial(synthetic_env, 2, 2), partial(policy_of, "hier_ucb"), 150, 3,
                           base_seed=7, keep_traces=True)
        frame = result.repetition_frame()
        assert list(frame.columns) == REPETITION_COLUMNS
        assert frame['seed'].tolist() == [7, 8, 9]
        assert frame['keyterm_asks'].tolist() == [t.keyterm_asks for t in result.traces]
        assert frame['settle_round'].tolist() == [keyterm_settle_round(t) for t in result.traces]
        assert frame['final_regret'].tolist() == result.final_regrets.tolist()
        assert frame['user'].isna().all()

    def test_rejects_zero_repetitions(self):
        with pytest.raises(ValueError):
            run_batch(partial(synthetic_env, 1, 1), partial(policy_of, "ucb"), 10, 0)


class TestStatistics:

    def test_higher_level_strictly_widens(self):
        samples = [3.0, 5.5, 4.25, 6.0, 2.75]
        low95, high95 = confidence_interval(samples, 0.95)
        low99, high99 = confidence_interval(samples, 0.99)
        assert low99 < low95 and high95 < high99

    def test_critical_value(self):
        assert critical_value(0.95) == pytest.approx(1.959964, abs=1e-6)

    def test_equal_samples(self):
        assert confidence_interval([0.3, 0.3, 0.3]) == (0.3, 0.3)

    def test_two_point_interval(self):
        low, high = confidence_interval([0.0, 1.0])
        assert low == pytest.approx(-0.48, abs=5e-3)
        assert high == pytest.approx(1.48, abs=5e-3)

    def test_single_sample_is_degenerate(self):
        assert confidence_interval([2.5]) == (2.5, 2.5)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            confidence_interval([])


class TestSwitchPoint:

    @pytest.mark.parametrize("kinds, expected", [
        ("KIKIIIIII", 3),
        ("IIIII", 0),
        ("IKIIK", None),
        ("K", None),
    ])
    def test_detect(self, kinds, expected):
        assert detect_switch_point(trace_from_kinds(kinds)) == expected

    @pytest.mark.parametrize("kinds, expected", [
        ("KIKIIIIII", 3),
        ("IIIII", 0),
        ("KKKKKKKKKKI", 9),
        ("IKIIIIIIIK", 10),
    ])
    def test_settle_round(self, kinds, expected):
        assert keyterm_settle_round(trace_from_kinds(kinds)) == expected

    def test_settle_round_ignores_late_stragglers(self):
        trace = trace_from_kinds("K" * 20 + "I" * 200 + "K" + "I" * 5)
        assert keyterm_settle_round(trace) == 19
        assert detect_switch_point(trace) == 221
