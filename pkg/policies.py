#!/usr/bin/env python3
"""
Conversational Bandit Policies
Hier-UCB, Hier-LinUCB and the UCB, LinUCB and FreqCon-LinUCB baselines behind one
select/update interface, including the key-term -> item pending-action state machine.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, NamedTuple, Optional, Tuple

import numpy as np

from catalog import Catalog
from environments import Action, ContextSet, Environment, StochasticEnvironment
from linear_model import RidgeState


class PolicyType(Enum):
    """Supported policies."""
    HIER_UCB = "hier_ucb"
    UCB = "ucb"
    HIER_LINUCB = "hier_linucb"
    LINUCB = "linucb"
    FREQCON_LINUCB = "freqcon_linucb"
    ORACLE = "oracle"


POLICY_LABELS = {
    PolicyType.HIER_UCB: "Hier-UCB",
    PolicyType.UCB: "UCB",
    PolicyType.HIER_LINUCB: "Hier-LinUCB",
    PolicyType.LINUCB: "LinUCB",
    PolicyType.FREQCON_LINUCB: "FreqCon-LinUCB (ConUCB proxy)",
    PolicyType.ORACLE: "Oracle",
}


@dataclass
class HierParams:
    """gamma: switching aggressiveness; alpha: contextual radius scale."""
    gamma: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        for name in ('gamma', 'alpha'):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")


@dataclass
class PolicyStats:
    """Counts and empirical means for the UCB family; t counts every action taken."""
    item_counts: np.ndarray
    item_means: np.ndarray
    keyterm_counts: np.ndarray
    keyterm_means: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, num_items: int, num_keyterms: int) -> 'PolicyStats':
        # Means start at 1 (optimistic); unpulled arms are dominated by the +inf radius anyway.
        return cls(np.zeros(num_items, dtype=np.int64), np.ones(num_items),
                   np.zeros(num_keyterms, dtype=np.int64), np.ones(num_keyterms))


@dataclass
class LinearPolicyState:
    item_ridge: RidgeState
    keyterm_ridge: RidgeState
    t: int = 0

    @classmethod
    def fresh(cls, dim: int) -> 'LinearPolicyState':
        return cls(RidgeState(dim), RidgeState(dim))


@dataclass
class FreqConState:
    """Single ridge shared by key-term and item feedback, plus the ask counter."""
    ridge: RidgeState
    asks_so_far: int = 0
    t: int = 0


class Decision(NamedTuple):
    action: Action
    pending: Optional[int]
    switching: bool
    leader: int


def ucb_confidence_radius(t: int, n: int) -> float:
    """sqrt(3 ln t / 2n); +inf for an unpulled arm."""
    if t < 1:
        raise ValueError(f"round must be >= 1, got {t}")
    if n == 0:
        return math.inf
    return math.sqrt(3 * math.log(t) / (2 * n))


def _confidence_radii(t: int, counts: np.ndarray) -> np.ndarray:
    radii = np.full(counts.shape, np.inf)
    pulled = counts > 0
    radii[pulled] = np.sqrt(3 * math.log(t) / (2 * counts[pulled]))
    return radii


def switching_condition(mean_item: float, radius_item: float, mean_keyterm: float,
                        radius_keyterm: float, gamma: float) -> bool:
    """Conservative best-item estimate >= generous best-key-term estimate."""
    if gamma == 0:
        return bool(mean_item >= mean_keyterm)
    if math.isinf(radius_item) or math.isinf(radius_keyterm):
        return False
    return bool(mean_item - gamma * radius_item >= mean_keyterm + gamma * radius_keyterm)


def hier_ucb_decide(stats: PolicyStats, catalog: Catalog, pending: Optional[int],
                    params: HierParams) -> Decision:
    if pending is not None:
        return Decision(Action.item(pending), None, False, -1)

    t = stats.t + 1
    keyterm_radii = _confidence_radii(t, stats.keyterm_counts)
    k_bar = int(np.argmax(stats.keyterm_means + keyterm_radii))

    members = catalog.members(k_bar)
    item_radii = _confidence_radii(t, stats.item_counts[members])
    scores = catalog.member_weights(k_bar) * (stats.item_means[members] + item_radii)
    j = int(np.argmax(scores))
    a_bar = int(members[j])

    switch = switching_condition(stats.item_means[a_bar], item_radii[j],
                                 stats.keyterm_means[k_bar], keyterm_radii[k_bar], params.gamma)
    if not switch:
        return Decision(Action.keyterm(k_bar), a_bar, False, k_bar)
    return Decision(Action.item(a_bar), None, True, k_bar)


def hier_ucb_select(stats: PolicyStats, catalog: Catalog, pending: Optional[int],
                    params: HierParams) -> Tuple[Action, Optional[int]]:
    decision = hier_ucb_decide(stats, catalog, pending, params)
    return decision.action, decision.pending


def hier_ucb_update(stats: PolicyStats, action: Action, reward: float,
                    bernoulli: bool = True) -> PolicyStats:
    """Incremental mean update; t advances by one for every action, key-term asks included."""
    if bernoulli and not (0.0 <= reward <= 1.0):
        raise ValueError(f"reward {reward} outside [0,1] in Bernoulli mode")
    if action.is_item:
        counts, means = stats.item_counts, stats.item_means
    else:
        counts, means = stats.keyterm_counts, stats.keyterm_means
    counts[action.index] += 1
    means[action.index] += (reward - means[action.index]) / counts[action.index]
    stats.t += 1
    return stats


def ucb_select(stats: PolicyStats, params: Optional[HierParams] = None) -> Action:
    t = stats.t + 1
    scores = stats.item_means + _confidence_radii(t, stats.item_counts)
    return Action.item(int(np.argmax(scores)))


def _require_contexts(contexts: Optional[ContextSet], dim: int) -> ContextSet:
    if contexts is None:
        raise ValueError("contextual policy requires item and key-term contexts")
    if contexts.item_contexts.shape[1] != dim or contexts.keyterm_contexts.shape[1] != dim:
        raise ValueError(f"context dimension mismatch: policy expects d={dim}, "
                         f"got d={contexts.item_contexts.shape[1]}")
    return contexts


def hier_linucb_decide(state: LinearPolicyState, catalog: Catalog, contexts: ContextSet,
                       pending: Optional[int], params: HierParams) -> Decision:
    contexts = _require_contexts(contexts, state.item_ridge.dim)
    if pending is not None:
        return Decision(Action.item(pending), None, False, -1)

    theta_k = state.keyterm_ridge.estimate()
    theta = state.item_ridge.estimate()

    X_k = contexts.keyterm_contexts
    keyterm_est = X_k @ theta_k
    keyterm_rad = state.keyterm_ridge.radii(X_k, params.alpha)
    k_bar = int(np.argmax(keyterm_est + keyterm_rad))

    members = catalog.members(k_bar)
    X = contexts.item_contexts[members]
    item_est = X @ theta
    item_rad = state.item_ridge.radii(X, params.alpha)
    j = int(np.argmax(catalog.member_weights(k_bar) * (item_est + item_rad)))
    a_bar = int(members[j])

    switch = switching_condition(item_est[j], item_rad[j], keyterm_est[k_bar],
                                 keyterm_rad[k_bar], params.gamma)
    if not switch:
        return Decision(Action.keyterm(k_bar), a_bar, False, k_bar)
    return Decision(Action.item(a_bar), None, True, k_bar)


def hier_linucb_select(state: LinearPolicyState, catalog: Catalog, contexts: ContextSet,
                       pending: Optional[int], params: HierParams) -> Tuple[Action, Optional[int]]:
    decision = hier_linucb_decide(state, catalog, contexts, pending, params)
    return decision.action, decision.pending


def hier_linucb_update(state: LinearPolicyState, action: Action, context, reward: float) -> LinearPolicyState:
    """Key-term feedback updates the key-term ridge, item feedback the item ridge."""
    ridge = state.item_ridge if action.is_item else state.keyterm_ridge
    ridge.update(context, reward)
    state.t += 1
    return state


def linucb_select(state: LinearPolicyState, contexts: ContextSet, params: HierParams) -> Action:
    contexts = _require_contexts(contexts, state.item_ridge.dim)
    X = contexts.item_contexts
    scores = X @ state.item_ridge.estimate() + state.item_ridge.radii(X, params.alpha)
    return Action.item(int(np.argmax(scores)))


def freqcon_schedule(t: int, scale: int = 10, base: float = 10.0) -> int:
    """b(t) = scale * floor(log_base t), computed without floating log error."""
    if t < 1:
        raise ValueError(f"round must be >= 1, got {t}")
    if base <= 1:
        raise ValueError(f"schedule base must exceed 1, got {base}")
    exponent = 0
    power = base
    while power <= t:
        exponent += 1
        power *= base
    return scale * exponent


def freqcon_select(state: FreqConState, contexts: ContextSet, params: HierParams,
                   scale: int = 10, base: float = 10.0) -> Action:
    """Ask the best key-term while asks lag b(t); otherwise recommend the best item."""
    contexts = _require_contexts(contexts, state.ridge.dim)
    t = state.t + 1
    theta = state.ridge.estimate()
    if state.asks_so_far < freqcon_schedule(t, scale, base):
        X_k = contexts.keyterm_contexts
        state.asks_so_far += 1
        return Action.keyterm(int(np.argmax(X_k @ theta + state.ridge.radii(X_k, params.alpha))))
    X = contexts.item_contexts
    return Action.item(int(np.argmax(X @ theta + state.ridge.radii(X, params.alpha))))


def freqcon_update(state: FreqConState, context, reward: float) -> FreqConState:
    state.ridge.update(context, reward)
    state.t += 1
    return state


class BanditPolicy:
    """
    Uniform interface used by the harness.

    `select` returns the round's action; `update` feeds back the reward observed for it.
    After `select`, `last_switching`, `pending_flag` and `leader` describe the decision.
    """
    kind: PolicyType = PolicyType.ORACLE
    uses_contexts = False

    def __init__(self, catalog: Catalog, debug: bool = False):
        self.catalog = catalog
        self.debug = debug
        self.logger = self._setup_logger()
        self.last_switching = False
        self.leader = -1

    def _setup_logger(self):
        logger = logging.getLogger(POLICY_LABELS[self.kind])
        if not logger.handlers:
            handler = logging.StreamHandler()
            handler.setFormatter(logging.Formatter('%(levelname)s - %(message)s'))
            logger.addHandler(handler)
        logger.setLevel(logging.DEBUG if self.debug else logging.INFO)
        return logger

    @property
    def label(self) -> str:
        return POLICY_LABELS[self.kind]

    @property
    def pending_flag(self) -> bool:
        return False

    @property
    def rounds(self) -> int:
        raise NotImplementedError

    def select(self, contexts: Optional[ContextSet] = None) -> Action:
        raise NotImplementedError

    def update(self, action: Action, reward: float, contexts: Optional[ContextSet] = None):
        raise NotImplementedError

    def snapshot(self) -> Dict[str, Any]:
        return {
            'policy': self.label,
            'round': self.rounds,
            'switching': self.last_switching,
            'pending': self.pending_flag,
            'leader': self.leader,
        }


class HierUCBPolicy(BanditPolicy):
    """Hierarchical UCB over the key-term / item graph (stochastic setting)."""
    kind = PolicyType.HIER_UCB

    def __init__(self, catalog: Catalog, gamma: float = 1.0, bernoulli: bool = True, debug: bool = False):
        super().__init__(catalog, debug)
        self.params = HierParams(gamma=gamma)
        self.bernoulli = bernoulli
        self.stats = PolicyStats.fresh(catalog.num_items, catalog.num_keyterms)
        self.pending: Optional[int] = None

    @property
    def pending_flag(self) -> bool:
        return self.pending is not None

    @property
    def rounds(self) -> int:
        return self.stats.t

    def select(self, contexts: Optional[ContextSet] = None) -> Action:
        decision = hier_ucb_decide(self.stats, self.catalog, self.pending, self.params)
        self.pending = decision.pending
        self.last_switching = decision.switching
        if decision.leader >= 0:
            self.leader = decision.leader
        return decision.action

    def update(self, action: Action, reward: float, contexts: Optional[ContextSet] = None):
        hier_ucb_update(self.stats, action, reward, self.bernoulli)

    def snapshot(self) -> Dict[str, Any]:
        snap = super().snapshot()
        snap.update({
            'item_counts': self.stats.item_counts.copy(),
            'item_means': self.stats.item_means.copy(),
            'keyterm_counts': self.stats.keyterm_counts.copy(),
            'keyterm_means': self.stats.keyterm_means.copy(),
        })
        return snap


class UCBPolicy(BanditPolicy):
    """Plain UCB over items only."""
    kind = PolicyType.UCB

    def __init__(self, catalog: Catalog, bernoulli: bool = True, debug: bool = False):
        super().__init__(catalog, debug)
        self.bernoulli = bernoulli
        self.stats = PolicyStats.fresh(catalog.num_items, catalog.num_keyterms)

    @property
    def rounds(self) -> int:
        return self.stats.t

    def select(self, contexts: Optional[ContextSet] = None) -> Action:
        return ucb_select(self.stats)

    def update(self, action: Action, reward: float, contexts: Optional[ContextSet] = None):
        if not action.is_item:
            raise ValueError(f"UCB never asks key-terms, got {action}")
        hier_ucb_update(self.stats, action, reward, self.bernoulli)

    def snapshot(self) -> Dict[str, Any]:
        snap = super().snapshot()
        snap.update({'item_counts': self.stats.item_counts.copy(),
                     'item_means': self.stats.item_means.copy()})
        return snap


class HierLinUCBPolicy(BanditPolicy):
    """Hierarchical LinUCB with separate item and key-term ridge models."""
    kind = PolicyType.HIER_LINUCB
    uses_contexts = True

    def __init__(self, catalog: Catalog, dim: int, gamma: float = 1.0, alpha: float = 1.0,
                 debug: bool = False):
        super().__init__(catalog, debug)
        self.params = HierParams(gamma=gamma, alpha=alpha)
        self.state = LinearPolicyState.fresh(dim)
        self.pending: Optional[int] = None

    @property
    def pending_flag(self) -> bool:
        return self.pending is not None

    @property
    def rounds(self) -> int:
        return self.state.t

    def select(self, contexts: Optional[ContextSet] = None) -> Action:
        decision = hier_linucb_decide(self.state, self.catalog, contexts, self.pending, self.params)
        self.pending = decision.pending
        self.last_switching = decision.switching
        if decision.leader >= 0:
            self.leader = decision.leader
        return decision.action

    def update(self, action: Action, reward: float, contexts: Optional[ContextSet] = None):
        contexts = _require_contexts(contexts, self.state.item_ridge.dim)
        hier_linucb_update(self.state, action, contexts.context_of(action), reward)

    def snapshot(self) -> Dict[str, Any]:
        snap = super().snapshot()
        snap.update({'theta_item': self.state.item_ridge.estimate().copy(),
                     'theta_keyterm': self.state.keyterm_ridge.estimate().copy()})
        return snap


class LinUCBPolicy(BanditPolicy):
    """Non-conversational LinUCB over all items."""
    kind = PolicyType.LINUCB
    uses_contexts = True

    def __init__(self, catalog: Catalog, dim: int, alpha: float = 1.0, debug: bool = False):
        super().__init__(catalog, debug)
        self.params = HierParams(gamma=0.0, alpha=alpha)
        self.state = LinearPolicyState.fresh(dim)

    @property
    def rounds(self) -> int:
        return self.state.t

    def select(self, contexts: Optional[ContextSet] = None) -> Action:
        return linucb_select(self.state, contexts, self.params)

    def update(self, action: Action, reward: float, contexts: Optional[ContextSet] = None):
        if not action.is_item:
            raise ValueError(f"LinUCB never asks key-terms, got {action}")
        contexts = _require_contexts(contexts, self.state.item_ridge.dim)
        hier_linucb_update(self.state, action, contexts.context_of(action), reward)

    def snapshot(self) -> Dict[str, Any]:
        snap = super().snapshot()
        snap['theta_item'] = self.state.item_ridge.estimate().copy()
        return snap


class FreqConLinUCBPolicy(BanditPolicy):
    """Fixed-frequency conversational baseline standing in for ConUCB."""
    kind = PolicyType.FREQCON_LINUCB
    uses_contexts = True

    def __init__(self, catalog: Catalog, dim: int, alpha: float = 1.0, schedule_scale: int = 10,
                 schedule_base: float = 10.0, debug: bool = False):
        super().__init__(catalog, debug)
        self.params = HierParams(gamma=0.0, alpha=alpha)
        self.schedule_scale = schedule_scale
        self.schedule_base = schedule_base
        self.state = FreqConState(RidgeState(dim))

    @property
    def rounds(self) -> int:
        return self.state.t

    @property
    def asks_so_far(self) -> int:
        return self.state.asks_so_far

    def select(self, contexts: Optional[ContextSet] = None) -> Action:
        return freqcon_select(self.state, contexts, self.params, self.schedule_scale, self.schedule_base)

    def update(self, action: Action, reward: float, contexts: Optional[ContextSet] = None):
        contexts = _require_contexts(contexts, self.state.ridge.dim)
        freqcon_update(self.state, contexts.context_of(action), reward)

    def snapshot(self) -> Dict[str, Any]:
        snap = super().snapshot()
        snap.update({'asks_so_far': self.state.asks_so_far,
                     'theta_shared': self.state.ridge.estimate().copy()})
        return snap


class OraclePolicy(BanditPolicy):
    """Always plays the environment's optimal action."""
    kind = PolicyType.ORACLE

    def __init__(self, catalog: Catalog, optimal_action: Action, debug: bool = False):
        super().__init__(catalog, debug)
        self.optimal_action = optimal_action
        self.t = 0

    @property
    def rounds(self) -> int:
        return self.t

    def select(self, contexts: Optional[ContextSet] = None) -> Action:
        return self.optimal_action

    def update(self, action: Action, reward: float, contexts: Optional[ContextSet] = None):
        self.t += 1


def build_policy(kind, env: Environment, gamma: float = 1.0, alpha: float = 1.0,
                 schedule_scale: int = 10, schedule_base: float = 10.0,
                 debug: bool = False) -> BanditPolicy:
    """Instantiate a policy for `env` from configuration values."""
    kind = PolicyType(kind)
    catalog = env.catalog
    bernoulli = isinstance(env, StochasticEnvironment)

    if kind is PolicyType.HIER_UCB:
        return HierUCBPolicy(catalog, gamma=gamma, bernoulli=bernoulli, debug=debug)
    if kind is PolicyType.UCB:
        return UCBPolicy(catalog, bernoulli=bernoulli, debug=debug)
    if kind is PolicyType.ORACLE:
        return OraclePolicy(catalog, env.optimal_expected_reward()[1], debug=debug)

    contexts = env.contexts(1)
    if contexts is None:
        raise ValueError(f"{POLICY_LABELS[kind]} needs an environment with contexts")
    if kind is PolicyType.HIER_LINUCB:
        return HierLinUCBPolicy(catalog, contexts.dim, gamma=gamma, alpha=alpha, debug=debug)
    if kind is PolicyType.LINUCB:
        return LinUCBPolicy(catalog, contexts.dim, alpha=alpha, debug=debug)
    return FreqConLinUCBPolicy(catalog, contexts.dim, alpha=alpha, schedule_scale=schedule_scale,
                               schedule_base=schedule_base, debug=debug)


def best_member_values(env: Environment) -> np.ndarray:
    """mu_{a*_k}: best expected item reward inside each key-term."""
    return np.array([float(np.max(env.item_expected[env.catalog.members(k)]))
                     for k in range(env.catalog.num_keyterms)])


def gamma_safety_threshold(env: Environment) -> float:
    """max over k != k* of (mu_{a*_k} - mu~_k) / (mu~_{k*} - mu~_k)."""
    k_star = env.best_keyterm()
    best_members = best_member_values(env)
    top = env.keyterm_expected[k_star]
    ratios = []
    for k in range(env.catalog.num_keyterms):
        if k == k_star:
            continue
        gap = top - env.keyterm_expected[k]
        ratios.append(math.inf if gap <= 0 else (best_members[k] - env.keyterm_expected[k]) / gap)
    return max(ratios, default=0.0)


def keyterm_pull_bound(env: Environment, gamma: float, horizon: int) -> float:
    """Upper bound on the expected number of asks of k* within `horizon` rounds."""
    k_star = env.best_keyterm()
    members = env.catalog.members(k_star)
    best_value = float(np.max(env.item_expected))
    log_t = math.log(horizon)
    margin = best_value - env.keyterm_expected[k_star]
    if margin <= 0:
        return math.inf
    bound = 6 * (gamma + 1) ** 2 * log_t / margin ** 2
    for a in members:
        gap = best_value - env.item_expected[a]
        if gap > 0:
            bound += 6 * log_t / gap ** 2
    return bound
