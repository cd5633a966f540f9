#!/usr/bin/env python3
"""
Experiment Harness
Seeded episodes and repetition batches with pseudo-regret accounting, confidence
intervals and switch-point detection.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import norm

from environments import Action, Environment
from policies import BanditPolicy

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ['round', 'action_type', 'action_id', 'reward', 'expected_reward',
                 'regret_inc', 'cum_regret', 'switching', 'pending']
BATCH_COLUMNS = ['round', 'mean_cum_regret', 'ci_low', 'ci_high', 'mean_avg_reward']
REPETITION_COLUMNS = ['repetition', 'seed', 'user', 'final_regret', 'keyterm_asks',
                      'switch_point', 'settle_round']
SETTLE_FRACTION = 0.9

EnvBuilder = Callable[[int, int], Environment]
PolicyBuilder = Callable[[Environment, int], BanditPolicy]


@dataclass
class EpisodeTrace:
    """Per-round record of one episode; arrays are indexed by round - 1."""
    policy_label: str
    optimal_reward: float
    is_keyterm: np.ndarray
    action_id: np.ndarray
    reward: np.ndarray
    expected_reward: np.ndarray
    regret_inc: np.ndarray
    cum_regret: np.ndarray
    switching: np.ndarray
    pending: np.ndarray
    leader: np.ndarray
    seed: Optional[int] = None

    @property
    def horizon(self) -> int:
        return int(self.action_id.shape[0])

    @property
    def rounds(self) -> np.ndarray:
        return np.arange(1, self.horizon + 1)

    @property
    def keyterm_asks(self) -> int:
        return int(self.is_keyterm.sum())

    def action_at(self, t: int) -> Action:
        i = t - 1
        if self.is_keyterm[i]:
            return Action.keyterm(int(self.action_id[i]))
        return Action.item(int(self.action_id[i]))

    def running_average_reward(self) -> np.ndarray:
        return np.cumsum(self.reward) / self.rounds

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'round': self.rounds,
            'action_type': np.where(self.is_keyterm, 'keyterm', 'item'),
            'action_id': self.action_id,
            'reward': self.reward,
            'expected_reward': self.expected_reward,
            'regret_inc': self.regret_inc,
            'cum_regret': self.cum_regret,
            'switching': self.switching.astype(int),
            'pending': self.pending.astype(int),
        }, columns=TRACE_COLUMNS)

    @classmethod
    def from_frame(cls, df: pd.DataFrame, policy_label: str = "") -> 'EpisodeTrace':
        """Rebuild a trace from its CSV columns (the leader column is not exported)."""
        missing = set(TRACE_COLUMNS) - set(df.columns)
        if missing:
            raise ValueError(f"trace is missing column(s) {sorted(missing)}")
        is_keyterm = df['action_type'].to_numpy() == 'keyterm'
        expected = df['expected_reward'].to_numpy(dtype=float)
        regret = df['regret_inc'].to_numpy(dtype=float)
        optimal = float(expected[0] + regret[0]) if len(df) else 0.0
        return cls(
            policy_label=policy_label,
            optimal_reward=optimal,
            is_keyterm=is_keyterm,
            action_id=df['action_id'].to_numpy(dtype=np.int64),
            reward=df['reward'].to_numpy(dtype=float),
            expected_reward=expected,
            regret_inc=regret,
            cum_regret=df['cum_regret'].to_numpy(dtype=float),
            switching=df['switching'].to_numpy(dtype=np.int8),
            pending=df['pending'].to_numpy(dtype=np.int8),
            leader=np.full(len(df), -1, dtype=np.int64),
        )


@dataclass
class BatchResult:
    """Pointwise aggregates over repetitions."""
    label: str
    mean_cum_regret: np.ndarray
    ci_half_width: np.ndarray
    mean_avg_reward: np.ndarray
    repetitions: int
    seeds: List[int]
    cum_regret_samples: np.ndarray
    switch_points: List[Optional[int]]
    keyterm_asks: List[int]
    level: float = 0.95
    traces: List[EpisodeTrace] = field(default_factory=list)
    settle_rounds: List[int] = field(default_factory=list)
    users: List[Optional[str]] = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return int(self.mean_cum_regret.shape[0])

    @property
    def ci_low(self) -> np.ndarray:
        return self.mean_cum_regret - self.ci_half_width

    @property
    def ci_high(self) -> np.ndarray:
        return self.mean_cum_regret + self.ci_half_width

    @property
    def final_regrets(self) -> np.ndarray:
        return self.cum_regret_samples[:, -1]

    @property
    def final_mean_regret(self) -> float:
        return float(self.mean_cum_regret[-1])

    @property
    def final_ci_half_width(self) -> float:
        return float(self.ci_half_width[-1])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'round': np.arange(1, self.horizon + 1),
            'mean_cum_regret': self.mean_cum_regret,
            'ci_low': self.ci_low,
            'ci_high': self.ci_high,
            'mean_avg_reward': self.mean_avg_reward,
        }, columns=BATCH_COLUMNS)

    def repetition_frame(self) -> pd.DataFrame:
        """One row per repetition (per user on dataset runs)."""
        n = self.repetitions
        return pd.DataFrame({
            'repetition': np.arange(n),
            'seed': self.seeds,
            'user': self.users or [None] * n,
            'final_regret': self.final_regrets,
            'keyterm_asks': self.keyterm_asks,
            'switch_point': pd.array(self.switch_points, dtype='Int64'),
            'settle_round': self.settle_rounds or [None] * n,
        }, columns=REPETITION_COLUMNS)


def run_episode(env: Environment, policy: BanditPolicy, horizon: int,
                seed: Optional[int] = None) -> EpisodeTrace:
    """select -> env step -> update -> log, for exactly `horizon` rounds."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if policy.catalog is not env.catalog and policy.catalog != env.catalog:
        raise ValueError("policy and environment were built for different catalogs")
    if seed is not None:
        env.reseed(seed)

    optimal, _ = env.optimal_expected_reward()
    item_expected = env.item_expected
    keyterm_expected = env.keyterm_expected

    is_keyterm = np.zeros(horizon, dtype=bool)
    action_id = np.zeros(horizon, dtype=np.int64)
    reward = np.zeros(horizon)
    expected = np.zeros(horizon)
    switching = np.zeros(horizon, dtype=np.int8)
    pending = np.zeros(horizon, dtype=np.int8)
    leader = np.full(horizon, -1, dtype=np.int64)

    for i in range(horizon):
        t = i + 1
        contexts = env.contexts(t)
        action = policy.select(contexts)
        switching[i] = policy.last_switching
        pending[i] = policy.pending_flag
        leader[i] = policy.leader

        r = env.step(action, t)
        policy.update(action, r, contexts)

        action_id[i] = action.index
        reward[i] = r
        if action.is_keyterm:
            is_keyterm[i] = True
            expected[i] = keyterm_expected[action.index]
        else:
            expected[i] = item_expected[action.index]

    regret_inc = optimal - expected
    return EpisodeTrace(
        policy_label=policy.label,
        optimal_reward=optimal,
        is_keyterm=is_keyterm,
        action_id=action_id,
        reward=reward,
        expected_reward=expected,
        regret_inc=regret_inc,
        cum_regret=np.cumsum(regret_inc),
        switching=switching,
        pending=pending,
        leader=leader,
        seed=seed,
    )


def _run_repetition(job: Tuple[EnvBuilder, PolicyBuilder, int, int, int, bool]):
    env_builder, policy_builder, horizon, repetition, seed, keep_trace = job
    env = env_builder(repetition, seed)
    policy = policy_builder(env, seed)
    trace = run_episode(env, policy, horizon, seed)
    return (trace.cum_regret, trace.running_average_reward(), detect_switch_point(trace),
            trace.keyterm_asks, trace if keep_trace else None, keyterm_settle_round(trace),
            getattr(env, 'user_label', None))


def run_batch(env_builder: EnvBuilder, policy_builder: PolicyBuilder, horizon: int,
              repetitions: int, base_seed: int = 0, workers: int = 1, keep_traces: bool = False,
              level: float = 0.95, label: Optional[str] = None) -> BatchResult:
    """
    Repetition i runs with seed base_seed + i for both environment and policy.

    With workers > 1 the builders must be picklable (module-level functions or
    functools.partial); results are merged in repetition order either way.
    """
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    seeds = [base_seed + i for i in range(repetitions)]
    jobs = [(env_builder, policy_builder, horizon, i, seeds[i], keep_traces) for i in range(repetitions)]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_repetition, jobs))
    else:
        outcomes = [_run_repetition(job) for job in jobs]

    cum_regret = np.vstack([outcome[0] for outcome in outcomes])
    avg_reward = np.vstack([outcome[1] for outcome in outcomes])
    traces = [outcome[4] for outcome in outcomes if outcome[4] is not None]
    if label is None:
        label = traces[0].policy_label if traces else ""

    result = BatchResult(
        label=label,
        mean_cum_regret=cum_regret.mean(axis=0),
        ci_half_width=ci_half_widths(cum_regret, level),
        mean_avg_reward=avg_reward.mean(axis=0),
        repetitions=repetitions,
        seeds=seeds,
        cum_regret_samples=cum_regret,
        switch_points=[outcome[2] for outcome in outcomes],
        keyterm_asks=[outcome[3] for outcome in outcomes],
        level=level,
        traces=traces,
        settle_rounds=[outcome[5] for outcome in outcomes],
        users=[outcome[6] for outcome in outcomes],
    )
    logger.info(f"📊 {label or 'batch'}: {repetitions} reps x {horizon} rounds, "
                f"final regret {result.final_mean_regret:.2f} ± {result.final_ci_half_width:.2f}")
    return result


def critical_value(level: float) -> float:
    if not (0 < level < 1):
        raise ValueError(f"confidence level must lie in (0, 1), got {level}")
    return float(norm.ppf(0.5 + level / 2))


def ci_half_widths(samples: np.ndarray, level: float = 0.95) -> np.ndarray:
    """z * s / sqrt(n) per column of a (repetitions x rounds) matrix; zeros when n = 1."""
    n = samples.shape[0]
    if n < 2:
        return np.zeros(samples.shape[1])
    return critical_value(level) * samples.std(axis=0, ddof=1) / math.sqrt(n)


def confidence_interval(samples: Sequence[float], level: float = 0.95) -> Tuple[float, float]:
    """Normal-approximation interval mean ± z s / sqrt(n)."""
    values = np.asarray(samples, dtype=float)
    if values.size == 0:
        raise ValueError("confidence interval needs at least one sample")
    z = critical_value(level)
    if values.size == 1 or np.all(values == values[0]):
        return float(values[0]), float(values[0])
    mean = float(values.mean())
    half = z * float(values.std(ddof=1)) / math.sqrt(values.size)
    return mean - half, mean + half


def detect_switch_point(trace: EpisodeTrace) -> Optional[int]:
    """
    Round of the last key-term ask, after which only items are played.

    0 when no key-term was ever asked; None when the episode ends on a key-term.
    """
    asks = np.flatnonzero(trace.is_keyterm)
    if asks.size == 0:
        return 0
    last = int(asks[-1]) + 1
    if last == trace.horizon:
        return None
    return last


def keyterm_settle_round(trace: EpisodeTrace, fraction: float = SETTLE_FRACTION) -> int:
    """
    Round by which `fraction` of all key-term asks have happened; 0 without asks.

    Unlike the switch point this ignores the sparse late asks that keep occurring while
    the key-term radii grow with ln t.
    """
    if not (0 < fraction <= 1):
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    asks = np.flatnonzero(trace.is_keyterm)
    if asks.size == 0:
        return 0
    needed = math.ceil(fraction * asks.size)
    return int(asks[needed - 1]) + 1
