import numpy as np
import pytest

from optstop.basis import BasisSpec, build_features
from optstop.gbm import TrajectorySet
from optstop.payoff import RewardSet, maxcall_rewards


def make_trajectories(prices, seed=0) -> TrajectorySet:
    """Wrap explicit prices (paths, periods[, assets]) in a TrajectorySet."""
    arr = np.asarray(prices, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return TrajectorySet(prices=arr, seed=seed)


def make_rewards(reward, beta=1.0) -> RewardSet:
    """Build a RewardSet directly from a reward matrix (no knockout logic)."""
    reward = np.asarray(reward, dtype=np.float64)
    undisc = reward / beta ** np.arange(1, reward.shape[1] + 1)
    return RewardSet(
        knockout_alive=np.ones_like(reward),
        payoff_undiscounted=undisc,
        reward=reward,
        discount_beta=beta,
        reward_upper_bound=float(reward.max()) if reward.size else 0.0,
    )


@pytest.fixture
def single_path_110_160_120():
    """One path, three periods, prices (110, 160, 120) on a single asset."""
    return make_trajectories([[110.0, 160.0, 120.0]])


def one_payoff_problem(rng, n_paths, n_periods, knockout_barrier=1e9, strike=100.0,
                       beta=0.998, start=100.0, step_vol=0.08):
    """Small synthetic max-call problem with a (one, payoff) feature tensor."""
    steps = rng.normal(loc=0.0, scale=step_vol, size=(n_paths, n_periods))
    prices = start * np.exp(np.cumsum(steps, axis=1))
    traj = make_trajectories(prices)
    rewards = maxcall_rewards(traj, strike, knockout_barrier, beta)
    features = build_features(traj, rewards, BasisSpec.parse("one,payoff"))
    return traj, rewards, features


def grid_optimum_two_periods(rewards):
    """Exact optimum over per-period (one, payoff) hard policies, T = 2.

    Every decision of the policy class {stop iff b0 + b1*payoff > 0} is an
    upper or lower payoff set, so enumerating sorted-payoff cut points per
    period covers the whole class exactly.
    """
    gp = rewards.payoff_undiscounted
    g = rewards.reward
    n = g.shape[0]

    def decisions(col):
        order = np.argsort(gp[:, col])
        sets = []
        for k in range(n + 1):
            up = np.zeros(n, dtype=bool)
            up[order[k:]] = True  # stop on the k largest payoffs
            sets.append(up)
            sets.append(~up)  # stop on the complement (negative slope)
        return np.array(sets)

    d1 = decisions(0)
    d2 = decisions(1)
    value2 = np.where(d2, g[None, :, 1], 0.0)
    best = -np.inf
    for stop1 in d1:
        first = g[stop1, 0].sum()
        cont = value2[:, ~stop1].sum(axis=1)
        best = max(best, (first + cont.max()) / n)
    return best
