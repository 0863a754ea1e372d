"""Knock-out indicators and discounted max-call rewards."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gbm import TrajectorySet


@dataclass(frozen=True)
class RewardSet:
    """Per-(path, period) rewards for a trajectory set.

    ``knockout_alive[w, t]`` is 1 while the running maximum price has stayed
    strictly below the barrier, ``payoff_undiscounted`` is the knock-out
    adjusted max-call payoff, and ``reward = beta^t * payoff_undiscounted``
    with t = 1..T. ``reward_upper_bound`` is the realized maximum reward of
    the set, used as the bounded-reward constant by the bound calculators.
    """

    knockout_alive: np.ndarray
    payoff_undiscounted: np.ndarray
    reward: np.ndarray
    discount_beta: float
    reward_upper_bound: float

    def __post_init__(self):
        if self.reward.shape != self.payoff_undiscounted.shape:
            raise ValueError("reward and payoff arrays must share a shape")
        if np.any(self.reward < 0.0):
            raise ValueError("rewards must be nonnegative")
        if np.any(self.reward > self.reward_upper_bound):
            raise ValueError("reward_upper_bound must dominate every reward")

    @property
    def n_paths(self) -> int:
        return self.reward.shape[0]

    @property
    def n_periods(self) -> int:
        return self.reward.shape[1]


def knockout_indicators(trajectories: TrajectorySet, barrier: float) -> np.ndarray:
    """0/1 array marking paths not yet knocked out.

    Entry (w, t) is 1 iff every asset price on path w stayed strictly below
    ``barrier`` at all exercise dates up to and including t. Monotone
    nonincreasing in t by construction.
    """
    if not barrier > 0:
        raise ValueError("barrier must be > 0")
    running_max = np.maximum.accumulate(trajectories.prices.max(axis=2), axis=1)
    return (running_max < barrier).astype(np.float64)


def maxcall_rewards(
    trajectories: TrajectorySet, strike: float, barrier: float, beta: float
) -> RewardSet:
    """Build the knock-out max-call reward set.

    The undiscounted payoff is ``y(t) * max(0, max_i p_i(t) - strike)`` and
    the reward discounts it by ``beta^t`` with t = 1..T (time-0 dollars).
    """
    if not strike > 0:
        raise ValueError("strike must be > 0")
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    alive = knockout_indicators(trajectories, barrier)
    intrinsic = np.maximum(trajectories.prices.max(axis=2) - strike, 0.0)
    payoff = alive * intrinsic
    periods = np.arange(1, trajectories.n_periods + 1, dtype=np.float64)
    reward = payoff * beta**periods
    bound = float(reward.max()) if reward.size else 0.0
    return RewardSet(
        knockout_alive=alive,
        payoff_undiscounted=payoff,
        reward=reward,
        discount_beta=float(beta),
        reward_upper_bound=bound,
    )
