#!/usr/bin/env python3
"""
Tests for the incremental ridge regression kernel.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from linear_model import REFRESH_EVERY, batch_ridge, estimate, init_ridge, ucb_radius, update_ridge


def test_init_is_identity_and_zero():
    state = init_ridge(3)
    assert_array_equal(state.gram, np.eye(3))
    assert_array_equal(state.moment, np.zeros(3))
    assert_array_equal(estimate(state), np.zeros(3))


def test_init_rejects_zero_dimension():
    with pytest.raises(ValueError):
        init_ridge(0)


def test_scalar_update():
    state = update_ridge(init_ridge(1), np.array([1.0]), 2.0)
    assert_array_equal(state.gram, [[2.0]])
    assert_array_equal(state.moment, [2.0])
    assert estimate(state)[0] == pytest.approx(1.0)


def test_zero_context_only_counts():
    state = update_ridge(init_ridge(2), np.zeros(2), 5.0)
    assert state.observation_count == 1
    assert_array_equal(state.gram, np.eye(2))
    assert_array_equal(state.moment, np.zeros(2))


def test_diagonal_solve():
    state = init_ridge(2)
    update_ridge(state, np.array([1.0, 0.0]), 1.0)
    update_ridge(state, np.array([0.0, 1.0]), 2.0)
    assert_allclose(estimate(state), [0.5, 1.0])


def test_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        update_ridge(init_ridge(2), np.ones(3), 1.0)


@pytest.mark.parametrize("alpha, expected", [(1.0, 1.0), (2.5, 2.5), (0.0, 0.0)])
def test_radius_on_fresh_state(alpha, expected):
    assert ucb_radius(init_ridge(4), np.array([0.0, 1.0, 0.0, 0.0]), alpha) == pytest.approx(expected)


def test_negative_alpha_rejected():
    with pytest.raises(ValueError):
        ucb_radius(init_ridge(2), np.ones(2), -1.0)


def test_radius_shrinks_with_observations():
    state = init_ridge(2)
    x = np.array([0.6, 0.8])
    before = ucb_radius(state, x, 1.0)
    update_ridge(state, x, 0.3)
    assert ucb_radius(state, x, 1.0) < before


def test_cached_inverse_matches_direct_solve_across_refresh():
    rng = np.random.default_rng(0)
    d = 4
    state = init_ridge(d)
    X = rng.standard_normal((REFRESH_EVERY + 37, d)) / 2
    y = X @ np.array([0.2, -0.1, 0.4, 0.0]) + 0.01 * rng.standard_normal(len(X))
    for x, r in zip(X, y):
        update_ridge(state, x, r)
    assert_allclose(state.gram_inverse, np.linalg.inv(state.gram), rtol=1e-8, atol=1e-10)
    assert_allclose(estimate(state), batch_ridge(X, y), rtol=1e-8, atol=1e-10)

    Q = rng.standard_normal((5, d))
    direct = [ucb_radius(state, q, 0.7) for q in Q]
    assert_allclose(state.radii(Q, 0.7), direct)


def test_copy_is_independent():
    state = update_ridge(init_ridge(2), np.array([1.0, 0.0]), 1.0)
    clone = state.copy()
    update_ridge(clone, np.array([0.0, 1.0]), 1.0)
    assert state.observation_count == 1
    assert clone.observation_count == 2
    assert_array_equal(state.gram, np.diag([2.0, 1.0]))


def test_incremental_matches_batch_over_many_updates():
    rng = np.random.default_rng(1)
    d = 20
    X = rng.standard_normal((1000, d)) / np.sqrt(d)
    y = rng.standard_normal(1000)
    state = init_ridge(d)
    for x, r in zip(X, y):
        update_ridge(state, x, r)
    assert np.max(np.abs(estimate(state) - batch_ridge(X, y))) <= 1e-9


def test_noiseless_recovery_up_to_ridge_shrinkage():
    d = 5
    theta = np.array([0.3, -0.2, 0.5, 0.1, -0.4])
    state = init_ridge(d)
    for _ in range(100):
        for x in np.eye(d):
            update_ridge(state, x, float(x @ theta))
    # Each coordinate is shrunk by n / (1 + n) with n = 100 passes.
    assert_allclose(estimate(state), theta * 100 / 101, rtol=1e-12)
    assert np.max(np.abs(estimate(state) - theta)) <= np.max(np.abs(theta)) / 101 + 1e-12
