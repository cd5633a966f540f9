#!/usr/bin/env python3
"""
Tests for the reward environments: derived key-term means, sampling, expected and
optimal rewards, synthetic builders and dataset loading.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from catalog import Catalog, build_binary_catalog, build_block_catalog
from environments import (Action, ContextualEnvironment, DimMode, KeyTermRewardModel,
                          StochasticEnvironment, build_synthetic_contextual,
                          build_synthetic_stochastic, construction_rng, derive_keyterm_means,
                          derive_keyterm_means_weighted, expected_reward, load_dataset_env,
                          optimal_expected_reward, read_vector_csv, step_contextual,
                          step_stochastic, write_vector_csv)


def single_edge_catalog():
    return build_binary_catalog([(0, 0)])


class TestDerivedKeytermMeans:

    def test_discounted_max_of_block(self):
        catalog = build_block_catalog(1, 10)
        means = np.arange(1, 11) / 100
        assert_allclose(derive_keyterm_means(catalog, means, 0.5), [0.05])

    def test_identity_at_lambda_one(self):
        assert derive_keyterm_means(single_edge_catalog(), [0.7], 1.0)[0] == 0.7

    def test_weighted_edge(self):
        catalog = Catalog(num_items=1, num_keyterms=2, weights={(0, 0): 0.5, (0, 1): 0.5})
        assert_allclose(derive_keyterm_means(catalog, [0.8], 0.5), [0.2, 0.2])

    def test_lambda_out_of_range(self):
        with pytest.raises(ValueError, match="lambda out of range"):
            derive_keyterm_means(single_edge_catalog(), [0.5], 1.5)

    def test_monotone_in_lambda(self):
        catalog = Catalog(num_items=3, num_keyterms=2,
                          weights={(0, 0): 1.0, (1, 0): 0.5, (1, 1): 0.5, (2, 1): 1.0})
        means = [0.2, 0.9, 0.4]
        rows = [derive_keyterm_means(catalog, means, lam) for lam in (0.1, 0.25, 0.5, 0.75, 1.0)]
        assert np.all(np.diff(np.vstack(rows), axis=0) >= 0)

    def test_weighted_average_model_is_below_discounted_max(self):
        catalog = build_block_catalog(2, 3)
        means = np.arange(1, 7) / 6
        assert_allclose(derive_keyterm_means_weighted(catalog, means, 0.5), [0.5 * 2 / 6, 0.5 * 5 / 6])
        assert np.all(derive_keyterm_means_weighted(catalog, means, 0.5)
                      <= derive_keyterm_means(catalog, means, 0.5))


class TestStochastic:

    def make_env(self, item_means, keyterm_means, seed=0):
        catalog = build_binary_catalog([(a, 0) for a in range(len(item_means))])
        return StochasticEnvironment(catalog, item_means, keyterm_means, rng_seed=seed)

    def test_degenerate_arms(self):
        env = self.make_env([1.0, 0.0], [0.5])
        assert all(step_stochastic(env, Action.item(0)) == 1.0 for _ in range(100))
        assert all(step_stochastic(env, Action.item(1)) == 0.0 for _ in range(100))

    def test_empirical_mean(self):
        env = self.make_env([0.5], [0.25], seed=7)
        draws = [step_stochastic(env, Action.item(0)) for _ in range(10_000)]
        assert abs(np.mean(draws) - 0.5) < 0.02
        assert set(draws) <= {0.0, 1.0}

    def test_keyterm_empirical_mean(self):
        env = self.make_env([0.5], [0.3], seed=9)
        draws = np.array([env.step(Action.keyterm(0)) for _ in range(10_000)])
        se = np.sqrt(0.3 * 0.7 / len(draws))
        assert abs(draws.mean() - env.expected_reward(Action.keyterm(0))) < 4 * se
        assert set(draws) <= {0.0, 1.0}

    def test_invalid_action(self):
        env = self.make_env([0.5], [0.25])
        with pytest.raises(ValueError, match="invalid action"):
            step_stochastic(env, Action.keyterm(3))
        with pytest.raises(ValueError):
            expected_reward(env, Action.item(-1))

    def test_reseed_reproduces_draws(self):
        env = self.make_env([0.5], [0.25], seed=3)
        first = [env.step(Action.item(0)) for _ in range(50)]
        env.reseed(3)
        assert [env.step(Action.item(0)) for _ in range(50)] == first

    def test_means_outside_unit_interval_rejected(self):
        with pytest.raises(ValueError, match="out of \\[0,1\\]"):
            self.make_env([1.2], [0.5])

    def test_expected_and_optimal(self):
        env = self.make_env([0.37], [0.4])
        assert expected_reward(env, Action.item(0)) == 0.37
        assert optimal_expected_reward(env) == (0.4, Action.keyterm(0))

    def test_tie_goes_to_item(self):
        catalog = single_edge_catalog()
        env = StochasticEnvironment(catalog, [0.6], derive_keyterm_means(catalog, [0.6], 1.0))
        assert optimal_expected_reward(env) == (0.6, Action.item(0))


class TestSyntheticStochastic:

    def test_desk_instance(self):
        env = build_synthetic_stochastic(10, 10, lam=0.5)
        assert env.catalog.num_items == 100
        assert env.item_means[99] == 1.0
        assert env.keyterm_means[9] == 0.5
        assert optimal_expected_reward(env) == (1.0, Action.item(99))
        assert env.satisfies_best_item_assumption()

    def test_trivial_instance(self):
        env = build_synthetic_stochastic(1, 1, lam=1.0)
        assert_allclose(env.item_means, [1.0])
        assert_allclose(env.keyterm_means, [1.0])

    def test_two_by_three(self):
        env = build_synthetic_stochastic(2, 3, lam=0.5)
        assert_allclose(env.item_means, np.arange(1, 7) / 6)
        assert_allclose(env.keyterm_means, [0.25, 0.5])
        best = Action.item(5)
        assert expected_reward(env, best) == 2 * expected_reward(env, Action.keyterm(1))

    def test_one_hot_contexts_attached(self):
        env = build_synthetic_stochastic(2, 3, lam=0.5)
        contexts = env.contexts(1)
        assert contexts.dim == 6
        assert_allclose(contexts.keyterm_contexts[1], 0.5 * np.eye(6)[5])

    def test_weighted_average_model(self):
        env = build_synthetic_stochastic(2, 3, lam=0.5,
                                         keyterm_model=KeyTermRewardModel.WEIGHTED_AVERAGE)
        assert_allclose(env.keyterm_means, [0.5 * 2 / 6, 0.5 * 5 / 6])


class TestContextual:

    def make_env(self, sigma=0.0, seed=0):
        catalog = build_binary_catalog([(0, 0), (1, 0)])
        X = np.array([[1.0, 0.0], [0.0, 1.0]])
        X_k = np.array([[0.9, 0.0]])
        return ContextualEnvironment(catalog, [1.0, 0.0], X, 0.5 * X_k, noise_sigma=sigma, rng_seed=seed)

    def test_noiseless_rewards(self):
        env = self.make_env()
        assert step_contextual(env, Action.item(0)) == 1.0
        assert step_contextual(env, Action.item(1)) == 0.0
        assert expected_reward(env, Action.keyterm(0)) == pytest.approx(0.45)

    def test_noise_is_reproducible(self):
        a = [step_contextual(self.make_env(0.1, seed=11), Action.item(0)) for _ in range(3)]
        b = [step_contextual(self.make_env(0.1, seed=11), Action.item(0)) for _ in range(3)]
        assert a == b
        assert a[0] != 1.0

    @pytest.mark.parametrize("action", [Action.item(0), Action.item(1), Action.keyterm(0)])
    def test_empirical_mean_matches_expected(self, action):
        env = self.make_env(0.2, seed=5)
        draws = np.array([env.step(action) for _ in range(10_000)])
        assert abs(draws.mean() - env.expected_reward(action)) < 4 * 0.2 / np.sqrt(len(draws))

    def test_context_norm_checked(self):
        catalog = single_edge_catalog()
        with pytest.raises(ValueError, match="norm"):
            ContextualEnvironment(catalog, [1.0], [[2.0]], [[0.5]])

    def test_one_hot_builder(self):
        env = build_synthetic_contextual(2, 2, dim_mode=DimMode.ONE_HOT, lam=0.5, noise_sigma=0.0)
        assert_allclose(env.item_expected, [0.25, 0.5, 0.75, 1.0])
        assert_allclose(env.keyterm_expected, [0.25, 0.5])

    def test_random_unit_builder(self):
        env = build_synthetic_contextual(3, 4, dim_mode=DimMode.RANDOM_UNIT, dim=5, seed=2)
        assert env.dim == 5
        assert np.all(np.diff(env.item_expected) >= 0)
        assert np.all(np.abs(env.item_expected) <= 1 + 1e-9)
        assert env.satisfies_best_item_assumption()

    def test_random_unit_keyterm_reward_is_discounted_best_member(self):
        env = build_synthetic_contextual(3, 4, dim_mode=DimMode.RANDOM_UNIT, lam=0.6, dim=5, seed=8)
        for k in range(env.catalog.num_keyterms):
            best = np.max(env.item_expected[env.catalog.members(k)])
            assert abs(env.keyterm_expected[k] - 0.6 * best) <= 1e-12

    def test_construction_stream_is_not_the_noise_stream(self):
        assert not np.allclose(construction_rng(4).standard_normal(6),
                               np.random.default_rng(4).standard_normal(6))

    def test_noise_is_independent_of_theta(self):
        env = build_synthetic_contextual(2, 3, dim_mode=DimMode.RANDOM_UNIT, dim=6,
                                         noise_sigma=0.1, seed=4)
        env.reseed(4)
        noise = np.array([env.step(Action.item(0)) - env.item_expected[0] for _ in range(6)])
        ratio = noise / env.theta_star
        assert np.ptp(ratio) > 1e-6
        assert env.satisfies_best_item_assumption()


class TestDatasetLoading:

    def write_dataset(self, tmp_path, graph_rows):
        items = tmp_path / "items.csv"
        users = tmp_path / "users.csv"
        graph = tmp_path / "graph.csv"
        write_vector_csv(items, 'item_id', ['a', 'b'], np.array([[1.0, 0.0], [0.0, 1.0]]))
        write_vector_csv(users, 'user_id', ['u1', 'u2'], np.array([[0.6, 0.8], [0.8, -0.6]]))
        graph.write_text("item_id,keyterm_id\n" + "".join(f"{a},{k}\n" for a, k in graph_rows))
        return items, graph, users

    def test_one_env_per_user(self, tmp_path):
        items, graph, users = self.write_dataset(tmp_path, [('a', 'k'), ('b', 'k')])
        envs = load_dataset_env(items, None, graph, users, lam=0.5, noise_sigma=0.0)
        assert len(envs) == 2
        assert not np.allclose(envs[0].theta_star, envs[1].theta_star)
        assert envs[0].keyterm_labels == ['k']
        assert_allclose(envs[0].keyterm_expected, [0.5 * 0.8])

    def test_provided_keyterm_contexts_used_verbatim(self, tmp_path):
        items, graph, users = self.write_dataset(tmp_path, [('a', 'k'), ('b', 'k')])
        keyterms = tmp_path / "keyterms.csv"
        X_k = np.array([[0.25, 0.5]])
        write_vector_csv(keyterms, 'keyterm_id', ['k'], X_k)
        envs = load_dataset_env(items, keyterms, graph, users, lam=0.5, noise_sigma=0.0)
        for env in envs:
            np.testing.assert_array_equal(env.keyterm_contexts, X_k)
            assert env.keyterm_expected[0] == pytest.approx(X_k[0] @ env.theta_star)
        assert [env.user_label for env in envs] == ['u1', 'u2']

    def test_unknown_item_in_graph(self, tmp_path):
        items, graph, users = self.write_dataset(tmp_path, [('a', 'k'), ('zz', 'k')])
        with pytest.raises(ValueError, match="unknown item id zz, graph.csv line 3"):
            load_dataset_env(items, None, graph, users)

    def test_dimension_mismatch_names_file(self, tmp_path):
        items, graph, users = self.write_dataset(tmp_path, [('a', 'k'), ('b', 'k')])
        write_vector_csv(users, 'user_id', ['u1'], np.array([[1.0, 0.0, 0.0]]))
        with pytest.raises(ValueError, match="users.csv"):
            load_dataset_env(items, None, graph, users)

    def test_vector_csv_reports_line(self, tmp_path):
        path = tmp_path / "items.csv"
        path.write_text("item_id,f0\na,0.5\nb,oops\n")
        with pytest.raises(ValueError, match="line 3"):
            read_vector_csv(path, 'item_id')
