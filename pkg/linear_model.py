#!/usr/bin/env python3
"""
Incremental Ridge Regression
Gram matrix / moment vector accumulation, point estimate and UCB radius shared by the
contextual policies.
"""

from typing import Optional

import numpy as np

# Full re-inversion cadence for the Sherman-Morrison cached inverse.
REFRESH_EVERY = 256


class RidgeState:
    """
    M = I + sum x x^T, b = sum r x.

    Keeps a Sherman-Morrison inverse of M for radii and a lazily solved estimate
    theta = M^-1 b. Exclusively owned by one policy; mutated in place by `update`.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"ridge dimension must be >= 1, got {dim}")
        self.dim = int(dim)
        self.gram = np.eye(self.dim)
        self.moment = np.zeros(self.dim)
        self.observation_count = 0
        self._gram_inv = np.eye(self.dim)
        self._theta: Optional[np.ndarray] = np.zeros(self.dim)
        self._since_refresh = 0

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"context dimension mismatch: expected ({self.dim},), got {x.shape}")
        return x

    def update(self, x, r: float) -> 'RidgeState':
        x = self._check(x)
        if not np.all(np.isfinite(x)) or not np.isfinite(r):
            raise ValueError("ridge update requires finite inputs")
        self.gram += np.outer(x, x)
        self.moment += r * x
        self.observation_count += 1
        self._theta = None

        self._since_refresh += 1
        if self._since_refresh >= REFRESH_EVERY:
            self._gram_inv = np.linalg.inv(self.gram)
            self._since_refresh = 0
        else:
            Mx = self._gram_inv @ x
            self._gram_inv -= np.outer(Mx, Mx) / (1.0 + x @ Mx)
        return self

    @property
    def gram_inverse(self) -> np.ndarray:
        return self._gram_inv

    def estimate(self) -> np.ndarray:
        if self._theta is None:
            self._theta = np.linalg.solve(self.gram, self.moment)
        return self._theta

    def radius(self, x, alpha: float) -> float:
        x = self._check(x)
        return float(alpha * np.sqrt(max(float(x @ self._gram_inv @ x), 0.0)))

    def radii(self, X: np.ndarray, alpha: float) -> np.ndarray:
        """Vectorized alpha * ||x||_{M^-1} over the rows of X."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"context dimension mismatch: expected (*, {self.dim}), got {X.shape}")
        quad = np.einsum('ij,jk,ik->i', X, self._gram_inv, X)
        return alpha * np.sqrt(np.maximum(quad, 0.0))

    def copy(self) -> 'RidgeState':
        clone = RidgeState(self.dim)
        clone.gram = self.gram.copy()
        clone.moment = self.moment.copy()
        clone.observation_count = self.observation_count
        clone._gram_inv = self._gram_inv.copy()
        clone._theta = None if self._theta is None else self._theta.copy()
        clone._since_refresh = self._since_refresh
        return clone


def init_ridge(d: int) -> RidgeState:
    return RidgeState(d)


def update_ridge(state: RidgeState, x, r: float) -> RidgeState:
    return state.update(x, r)


def estimate(state: RidgeState) -> np.ndarray:
    return state.estimate()


def ucb_radius(state: RidgeState, x, alpha_t: float) -> float:
    if alpha_t < 0:
        raise ValueError(f"alpha_t must be nonnegative, got {alpha_t}")
    return state.radius(x, alpha_t)


def batch_ridge(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """One-shot (I + X^T X)^-1 X^T y."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.linalg.solve(np.eye(X.shape[1]) + X.T @ X, X.T @ y)
