#!/usr/bin/env python3
"""
Reward Environments
Bernoulli, linear-contextual and dataset-backed reward processes for the unified
key-term / item action space, with expected rewards for pseudo-regret accounting.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from catalog import Catalog, build_block_catalog, read_graph_csv, validate_catalog

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-9


class ActionType(Enum):
    """The two sides of the unified action space."""
    ITEM = "item"
    KEYTERM = "keyterm"


class KeyTermRewardModel(Enum):
    """How a key-term's expected reward relates to its members."""
    DISCOUNTED_MAX = "discounted-max"
    WEIGHTED_AVERAGE = "weighted-average"


class DimMode(Enum):
    ONE_HOT = "one-hot"
    RANDOM_UNIT = "random-unit"


@dataclass(frozen=True)
class Action:
    """Exactly one of Item(id) or KeyTerm(id)."""
    kind: ActionType
    index: int

    @classmethod
    def item(cls, index: int) -> 'Action':
        return cls(ActionType.ITEM, int(index))

    @classmethod
    def keyterm(cls, index: int) -> 'Action':
        return cls(ActionType.KEYTERM, int(index))

    @property
    def is_item(self) -> bool:
        return self.kind is ActionType.ITEM

    @property
    def is_keyterm(self) -> bool:
        return self.kind is ActionType.KEYTERM

    def __str__(self):
        return f"{'Item' if self.is_item else 'KeyTerm'}({self.index})"


@dataclass(frozen=True)
class ContextSet:
    """Per-round feature view: one row per item and one row per key-term."""
    item_contexts: np.ndarray
    keyterm_contexts: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.item_contexts.shape[1])

    def context_of(self, action: Action) -> np.ndarray:
        if action.is_item:
            return self.item_contexts[action.index]
        return self.keyterm_contexts[action.index]


def check_discount(lam: float) -> float:
    if not (0 < lam <= 1) or not math.isfinite(lam):
        raise ValueError(f"lambda out of range: {lam} (must satisfy 0 < lambda <= 1)")
    return float(lam)


def derive_keyterm_means(catalog: Catalog, item_means, lam: float) -> np.ndarray:
    """mu~_k = lambda * max over a in A_k of W[a,k] * mu_a."""
    lam = check_discount(lam)
    mu = np.asarray(item_means, dtype=float)
    _check_item_vector(catalog, mu)
    means = np.empty(catalog.num_keyterms)
    for k in range(catalog.num_keyterms):
        members = catalog.members(k)
        means[k] = lam * float(np.max(catalog.member_weights(k) * mu[members]))
    return means


def derive_keyterm_means_weighted(catalog: Catalog, item_means, lam: float) -> np.ndarray:
    """Prior-work model: lambda * weight-normalized average of member means."""
    lam = check_discount(lam)
    mu = np.asarray(item_means, dtype=float)
    _check_item_vector(catalog, mu)
    means = np.empty(catalog.num_keyterms)
    for k in range(catalog.num_keyterms):
        members = catalog.members(k)
        w = catalog.member_weights(k)
        means[k] = lam * float(np.dot(w, mu[members]) / w.sum())
    return means


def _check_item_vector(catalog: Catalog, values: np.ndarray):
    if values.shape != (catalog.num_items,):
        raise ValueError(f"expected {catalog.num_items} item values, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("item values must be finite")


class Environment:
    """
    Shared behaviour of every reward process: action validation, expected rewards,
    the optimal action and a privately owned seeded generator.

    Subclasses fill `item_expected` / `keyterm_expected` and implement `_sample`.
    """

    def __init__(self, catalog: Catalog, item_expected: np.ndarray, keyterm_expected: np.ndarray,
                 rng_seed: int = 0, contexts: Optional[ContextSet] = None, debug: bool = False):
        self.debug = debug
        self.logger = self._setup_logger()
        self.catalog = catalog
        self.item_expected = np.asarray(item_expected, dtype=float)
        self.keyterm_expected = np.asarray(keyterm_expected, dtype=float)
        if self.keyterm_expected.shape != (catalog.num_keyterms,):
            raise ValueError(f"expected {catalog.num_keyterms} key-term values, "
                             f"got shape {self.keyterm_expected.shape}")
        _check_item_vector(catalog, self.item_expected)
        self._contexts = contexts
        self.rng_seed = int(rng_seed)
        self.rng = np.random.default_rng(self.rng_seed)
        self._optimal = self._compute_optimal()

    def _setup_logger(self):
        logger = logging.getLogger('Environment')
        if not logger.handlers:
            handler = logging.StreamHandler()
            handler.setFormatter(logging.Formatter('%(levelname)s - %(message)s'))
            logger.addHandler(handler)
        logger.setLevel(logging.DEBUG if self.debug else logging.INFO)
        return logger

    def reseed(self, seed: int):
        self.rng_seed = int(seed)
        self.rng = np.random.default_rng(self.rng_seed)

    def contexts(self, t: int = 1) -> Optional[ContextSet]:
        """Feature view for round t (static here)."""
        return self._contexts

    def validate_action(self, action: Action):
        limit = self.catalog.num_items if action.is_item else self.catalog.num_keyterms
        if not (0 <= action.index < limit):
            raise ValueError(f"invalid action {action}: id out of range (limit {limit})")

    def expected_reward(self, action: Action) -> float:
        self.validate_action(action)
        if action.is_item:
            return float(self.item_expected[action.index])
        return float(self.keyterm_expected[action.index])

    def optimal_expected_reward(self) -> Tuple[float, Action]:
        return self._optimal

    def _compute_optimal(self) -> Tuple[float, Action]:
        best_item = int(np.argmax(self.item_expected))
        best_keyterm = int(np.argmax(self.keyterm_expected))
        item_value = float(self.item_expected[best_item])
        keyterm_value = float(self.keyterm_expected[best_keyterm])
        if keyterm_value > item_value:
            return keyterm_value, Action.keyterm(best_keyterm)
        return item_value, Action.item(best_item)

    def best_keyterm(self) -> int:
        """k* = argmax of expected key-term rewards (lowest index on ties)."""
        return int(np.argmax(self.keyterm_expected))

    def satisfies_best_item_assumption(self) -> bool:
        """True iff the best item overall is a member of k* (up to ties in value)."""
        k_star = self.best_keyterm()
        members = self.catalog.members(k_star)
        return bool(np.max(self.item_expected[members]) >= np.max(self.item_expected) - 1e-12)

    def require_best_item_assumption(self):
        if not self.satisfies_best_item_assumption():
            raise ValueError("constructed environment violates the best-item assumption: "
                             f"the best item is not a member of key-term {self.best_keyterm()}")

    def step(self, action: Action, t: int = 1) -> float:
        self.validate_action(action)
        return self._sample(action)

    def _sample(self, action: Action) -> float:
        raise NotImplementedError


class StochasticEnvironment(Environment):
    """Bernoulli item and key-term rewards."""

    def __init__(self, catalog: Catalog, item_means, keyterm_means, rng_seed: int = 0,
                 contexts: Optional[ContextSet] = None, debug: bool = False):
        super().__init__(catalog, item_means, keyterm_means, rng_seed, contexts, debug)
        for label, values in (('item', self.item_expected), ('key-term', self.keyterm_expected)):
            bad = np.flatnonzero((values < 0) | (values > 1))
            if bad.size:
                raise ValueError(f"{label} mean out of [0,1] at index {int(bad[0])}: {values[bad[0]]}")

    @property
    def item_means(self) -> np.ndarray:
        return self.item_expected

    @property
    def keyterm_means(self) -> np.ndarray:
        return self.keyterm_expected

    def _sample(self, action: Action) -> float:
        mu = self.item_expected[action.index] if action.is_item else self.keyterm_expected[action.index]
        return 1.0 if self.rng.random() < mu else 0.0


class ContextualEnvironment(Environment):
    """Linear rewards x^T theta* plus Gaussian noise."""

    def __init__(self, catalog: Catalog, theta_star, item_contexts, keyterm_contexts,
                 noise_sigma: float = 0.1, rng_seed: int = 0, debug: bool = False):
        theta = np.asarray(theta_star, dtype=float)
        X = np.asarray(item_contexts, dtype=float)
        X_k = np.asarray(keyterm_contexts, dtype=float)
        dim = theta.shape[0]
        if theta.ndim != 1 or X.ndim != 2 or X_k.ndim != 2:
            raise ValueError("theta_star must be a vector and contexts must be matrices")
        if X.shape != (catalog.num_items, dim):
            raise ValueError(f"item contexts must have shape ({catalog.num_items}, {dim}), got {X.shape}")
        if X_k.shape != (catalog.num_keyterms, dim):
            raise ValueError(f"key-term contexts must have shape ({catalog.num_keyterms}, {dim}), got {X_k.shape}")
        for label, values in (('theta_star', theta), ('item contexts', X), ('key-term contexts', X_k)):
            if not np.all(np.isfinite(values)):
                raise ValueError(f"{label} contain non-finite values")
        if noise_sigma < 0 or not math.isfinite(noise_sigma):
            raise ValueError(f"noise_sigma must be finite and nonnegative, got {noise_sigma}")
        for label, values in (('item', X), ('key-term', X_k)):
            norms = np.linalg.norm(values, axis=1)
            bad = np.flatnonzero(norms > 1 + NORM_TOLERANCE)
            if bad.size:
                raise ValueError(f"{label} context {int(bad[0])} has norm {norms[bad[0]]:.6f} > 1")

        self.dim = dim
        self.theta_star = theta
        self.item_contexts = X
        self.keyterm_contexts = X_k
        self.noise_sigma = float(noise_sigma)
        item_expected = X @ theta
        keyterm_expected = X_k @ theta
        if np.any(np.abs(item_expected) > 1 + NORM_TOLERANCE):
            raise ValueError("expected item rewards must lie in [-1, 1]")
        super().__init__(catalog, item_expected, keyterm_expected, rng_seed,
                         ContextSet(X, X_k), debug)

    def _sample(self, action: Action) -> float:
        x = self.item_contexts[action.index] if action.is_item else self.keyterm_contexts[action.index]
        return float(x @ self.theta_star) + float(self.rng.normal(0.0, self.noise_sigma))


def step_stochastic(env: StochasticEnvironment, action: Action, t: int = 1) -> float:
    return env.step(action, t)


def step_contextual(env: ContextualEnvironment, action: Action, t: int = 1) -> float:
    return env.step(action, t)


def expected_reward(env: Environment, action: Action) -> float:
    return env.expected_reward(action)


def optimal_expected_reward(env: Environment) -> Tuple[float, Action]:
    return env.optimal_expected_reward()


def one_hot_contexts(catalog: Catalog, item_rewards: np.ndarray, lam: float) -> ContextSet:
    """x_a = e_a and x~_k = lambda * e_{a_k*}, a_k* the best member of k."""
    X = np.eye(catalog.num_items)
    return ContextSet(X, keyterm_contexts_from_items(catalog, X, item_rewards, lam))


def keyterm_contexts_from_items(catalog: Catalog, item_contexts: np.ndarray,
                                item_rewards: np.ndarray, lam: float) -> np.ndarray:
    """x~_k = lambda * x_{a_k*}, with a_k* = argmax over A_k of the item reward."""
    lam = check_discount(lam)
    X_k = np.empty((catalog.num_keyterms, item_contexts.shape[1]))
    for k in range(catalog.num_keyterms):
        members = catalog.members(k)
        best = members[int(np.argmax(item_rewards[members]))]
        X_k[k] = lam * item_contexts[best]
    return X_k


def build_synthetic_stochastic(num_keyterms: int, items_per_keyterm: int, lam: float = 0.5,
                               seed: int = 0,
                               keyterm_model: KeyTermRewardModel = KeyTermRewardModel.DISCOUNTED_MAX,
                               debug: bool = False) -> StochasticEnvironment:
    """
    Contiguous blocks of `items_per_keyterm` items per key-term; item i (1-based) has
    mean i / num_items. One-hot contexts are attached for linear policies.
    """
    if num_keyterms < 1 or items_per_keyterm < 1:
        raise ValueError("num_keyterms and items_per_keyterm must be positive")
    catalog = build_block_catalog(num_keyterms, items_per_keyterm)
    n = catalog.num_items
    item_means = np.arange(1, n + 1, dtype=float) / n
    if keyterm_model is KeyTermRewardModel.WEIGHTED_AVERAGE:
        keyterm_means = derive_keyterm_means_weighted(catalog, item_means, lam)
    else:
        keyterm_means = derive_keyterm_means(catalog, item_means, lam)
    env = StochasticEnvironment(catalog, item_means, keyterm_means, rng_seed=seed,
                                contexts=one_hot_contexts(catalog, item_means, lam), debug=debug)
    env.require_best_item_assumption()
    return env


def build_synthetic_contextual(num_keyterms: int, items_per_keyterm: int,
                               dim_mode: DimMode = DimMode.ONE_HOT, lam: float = 0.5,
                               noise_sigma: float = 0.1, seed: int = 0, dim: Optional[int] = None,
                               debug: bool = False) -> ContextualEnvironment:
    """
    One-hot: d = num_items, theta* = (1/n, ..., 1). Random-unit: theta* and items drawn
    on the unit sphere (dimension `dim`, default 10), items relabelled in ascending reward.
    Key-term contexts are lambda times the best member's context in both modes.
    """
    if num_keyterms < 1 or items_per_keyterm < 1:
        raise ValueError("num_keyterms and items_per_keyterm must be positive")
    dim_mode = DimMode(dim_mode)
    catalog = build_block_catalog(num_keyterms, items_per_keyterm)
    n = catalog.num_items

    if dim_mode is DimMode.ONE_HOT:
        X = np.eye(n)
        theta = np.arange(1, n + 1, dtype=float) / n
    else:
        d = dim if dim is not None else 10
        if d < 1:
            raise ValueError(f"dim must be >= 1, got {d}")
        rng = construction_rng(seed)
        theta = random_unit_vectors(rng, 1, d)[0]
        X = random_unit_vectors(rng, n, d)
        X = X[np.argsort(X @ theta, kind='stable')]

    X_k = keyterm_contexts_from_items(catalog, X, X @ theta, lam)
    env = ContextualEnvironment(catalog, theta, X, X_k, noise_sigma=noise_sigma,
                                rng_seed=seed, debug=debug)
    env.require_best_item_assumption()
    return env


def construction_rng(seed: int) -> np.random.Generator:
    """Instance-building stream, independent of the reward-noise stream `default_rng(seed)`."""
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])


def random_unit_vectors(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """Uniform draws on the unit sphere (normalized Gaussians)."""
    vectors = rng.standard_normal((count, dim))
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return vectors / norms


def read_vector_csv(path, id_column: str) -> Tuple[List[str], np.ndarray]:
    """Read `<id_column>,f0,...,f{d-1}`; returns labels in file order and the matrix."""
    name = getattr(path, 'name', str(path))
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if not len(df.columns) or df.columns[0] != id_column:
        raise ValueError(f"{name}: first column must be {id_column!r}")
    feature_columns = list(df.columns[1:])
    expected = [f"f{i}" for i in range(len(feature_columns))]
    if not feature_columns or feature_columns != expected:
        raise ValueError(f"{name}: feature columns must be f0..f{{d-1}}, got {feature_columns}")

    labels: List[str] = []
    seen: Dict[str, int] = {}
    matrix = np.empty((len(df), len(feature_columns)))
    for row_number, row in enumerate(df.itertuples(index=False)):
        line = row_number + 2
        label = str(row[0]).strip()
        if label in seen:
            raise ValueError(f"duplicate {id_column} {label}, {name} line {line}")
        seen[label] = row_number
        labels.append(label)
        for j, cell in enumerate(row[1:]):
            try:
                value = float(cell)
            except ValueError:
                raise ValueError(f"malformed value {cell!r} in column f{j}, {name} line {line}") from None
            if not math.isfinite(value):
                raise ValueError(f"non-finite value in column f{j}, {name} line {line}")
            matrix[row_number, j] = value
    if not labels:
        raise ValueError(f"{name}: no rows")
    return labels, matrix


def write_vector_csv(path, id_column: str, labels, matrix: np.ndarray) -> str:
    df = pd.DataFrame(np.asarray(matrix, dtype=float),
                      columns=[f"f{i}" for i in range(matrix.shape[1])])
    df.insert(0, id_column, list(labels))
    df.to_csv(path, index=False, lineterminator='\n')
    return str(path)


def load_dataset_env(item_context_file, keyterm_context_file, graph_file, user_file,
                     lam: float = 0.5, noise_sigma: float = 0.1, seed: int = 0,
                     debug: bool = False) -> List[ContextualEnvironment]:
    """
    One ContextualEnvironment per row of the user file.

    Key-term contexts from `keyterm_context_file` are used verbatim; when it is None
    they are derived per user as lambda * x of the best member item.
    """
    lam = check_discount(lam)
    item_labels, X = read_vector_csv(item_context_file, 'item_id')
    user_labels, users = read_vector_csv(user_file, 'user_id')
    item_index = {label: i for i, label in enumerate(item_labels)}
    d = X.shape[1]
    if users.shape[1] != d:
        raise ValueError(f"dimension mismatch: {Path(user_file).name} has d={users.shape[1]}, "
                         f"{Path(item_context_file).name} has d={d}")

    X_k = None
    if keyterm_context_file is not None:
        keyterm_labels, X_k = read_vector_csv(keyterm_context_file, 'keyterm_id')
        if X_k.shape[1] != d:
            raise ValueError(f"dimension mismatch: {Path(keyterm_context_file).name} has "
                             f"d={X_k.shape[1]}, {Path(item_context_file).name} has d={d}")
    else:
        keyterm_labels = _keyterm_labels_from_graph(graph_file)
    keyterm_index = {label: k for k, label in enumerate(keyterm_labels)}

    catalog = read_graph_csv(graph_file, item_index=item_index, keyterm_index=keyterm_index)
    violations = validate_catalog(catalog)
    if violations:
        raise ValueError(f"{Path(graph_file).name}: invalid catalog: {'; '.join(violations[:5])}")

    envs = []
    for u, theta in enumerate(users):
        keyterm_contexts = X_k if X_k is not None else keyterm_contexts_from_items(catalog, X, X @ theta, lam)
        env = ContextualEnvironment(catalog, theta, X, keyterm_contexts, noise_sigma=noise_sigma,
                                    rng_seed=seed + u, debug=debug)
        if X_k is None:
            env.require_best_item_assumption()
        elif not env.satisfies_best_item_assumption():
            logger.warning(f"⚠️ user {user_labels[u]}: best item is outside the best key-term "
                           "(provided key-term contexts)")
        env.user_label = user_labels[u]
        env.item_labels = item_labels
        env.keyterm_labels = keyterm_labels
        envs.append(env)

    logger.info(f"📊 Loaded dataset: {len(envs)} users, {catalog.num_items} items, "
                f"{catalog.num_keyterms} key-terms, d={d}")
    return envs


def _keyterm_labels_from_graph(graph_file) -> List[str]:
    df = pd.read_csv(graph_file, dtype=str, keep_default_na=False)
    if 'keyterm_id' not in df.columns:
        raise ValueError(f"{Path(graph_file).name}: missing column ['keyterm_id']")
    labels: List[str] = []
    seen = set()
    for label in df['keyterm_id']:
        label = label.strip()
        if label not in seen:
            seen.add(label)
            labels.append(label)
    return labels
