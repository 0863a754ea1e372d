"""Least-squares Monte Carlo baseline and its linear-policy transform."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .basis import FeatureTensor
from .payoff import RewardSet
from .policy import WeightMatrix, rewards_at_stop, stopping_times_from_scores

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LsmWeights:
    """Continuation-value regression weights for periods 1..T-1."""

    weights: np.ndarray
    basis_fingerprint: str = ""

    def __post_init__(self):
        if self.weights.ndim != 2:
            raise ValueError("weights must be 2-d (periods x features)")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]


def lsm_fit(
    features: FeatureTensor, rewards: RewardSet, ridge_scale: float = 1e-10
) -> LsmWeights:
    """Backward least-squares fit of continuation values.

    Starting from the final-period reward, each stage t = T-1..1 regresses
    the running continuation value on the stage features over all
    trajectories, then replaces the continuation value with the stage reward
    wherever stopping beats the fitted continuation. Normal equations are
    regularized with a ridge of ``ridge_scale * mean(diag(X'X))`` so
    rank-deficient stages still solve; deficiencies are logged, not fatal.
    """
    n_periods = features.n_periods
    if n_periods < 2:
        raise ValueError("LSM needs at least two periods")
    k = features.n_features
    values = features.values
    reward = rewards.reward

    out = np.empty((n_periods - 1, k))
    cont = reward[:, n_periods - 1].copy()
    deficient: list[int] = []
    for t in range(n_periods - 1, 0, -1):
        x = values[:, t - 1, :]
        # einsum keeps the path-axis reductions off BLAS so the summation
        # order never depends on the ambient thread pool
        gram = np.einsum("nk,nl->kl", x, x)
        rhs = np.einsum("nk,n->k", x, cont)
        diag_mean = float(np.trace(gram)) / k
        lam = ridge_scale * diag_mean if diag_mean > 0.0 else 1.0
        if np.linalg.matrix_rank(gram) < k:
            deficient.append(t)
        b = np.linalg.solve(gram + lam * np.eye(k), rhs)
        out[t - 1] = b
        fitted = x @ b
        g_t = reward[:, t - 1]
        cont = np.where(fitted >= g_t, cont, g_t)
    if deficient:
        logger.warning(
            "rank-deficient regression at %d stage(s): t=%s (ridge applied)",
            len(deficient),
            sorted(deficient),
        )
    return LsmWeights(weights=out, basis_fingerprint=features.fingerprint)


class LastPeriodRule(Enum):
    """How the transformed policy behaves at t = T, where LSM has no weights."""

    STOP_IF_ITM = "stop_if_itm"
    NEVER = "never"


def lsm_to_linear_policy(
    lsm: LsmWeights,
    beta: float,
    payoff_column: int | None,
    last_period_rule: LastPeriodRule = LastPeriodRule.STOP_IF_ITM,
) -> WeightMatrix:
    """Convert continuation regressions into equivalent hard-policy weights.

    The LSM rule stops at t < T iff the discounted reward exceeds the fitted
    continuation value. With the undiscounted payoff among the features
    (``payoff_column``), that decision equals the sign test of a linear
    policy whose row t is ``-beta^-t * b_t`` except for the payoff entry,
    which becomes ``1 - beta^-t * b_{t,payoff}``. Row T defaults to
    stop-if-in-the-money (payoff weight 1, rest 0).
    """
    if payoff_column is None:
        raise ValueError("the basis must contain the payoff column")
    t_minus_1, k = lsm.weights.shape
    if not 0 <= payoff_column < k:
        raise ValueError(f"payoff_column {payoff_column} out of range for K={k}")
    out = np.empty((t_minus_1 + 1, k))
    scale = beta ** -np.arange(1, t_minus_1 + 1, dtype=np.float64)
    out[:t_minus_1] = -scale[:, None] * lsm.weights
    out[:t_minus_1, payoff_column] += 1.0
    out[t_minus_1] = 0.0
    if last_period_rule is LastPeriodRule.STOP_IF_ITM:
        out[t_minus_1, payoff_column] = 1.0
    return WeightMatrix(weights=out, basis_fingerprint=lsm.basis_fingerprint)


def rescale_to_unit_payoff(
    policy: WeightMatrix, payoff_column: int, floor: float = 1e-12
) -> WeightMatrix:
    """Rescale each period's weights so |payoff coefficient| is 1.

    Positive per-row scaling leaves every hard-policy decision unchanged,
    but it matters when the weights seed the smoothed-policy stage solver:
    the raw continuation-regression transform is so flat that the sigmoid
    stays soft over a wide payoff band, and gradient ascent then slides into
    a degenerate never-stop stationary point. With the payoff coefficient
    at unit magnitude the scores are in payoff units and the solver stays
    in (and can move within) the thresholded-decision region. Rows whose
    payoff coefficient is below ``floor`` are left untouched.
    """
    weights = policy.weights.copy()
    scale = np.abs(weights[:, payoff_column])
    scale[scale < floor] = 1.0
    weights /= scale[:, None]
    return WeightMatrix(weights=weights, basis_fingerprint=policy.basis_fingerprint)


def lsm_scores(
    lsm: LsmWeights, features: FeatureTensor, rewards: RewardSet
) -> np.ndarray:
    """Raw decision scores of the LSM rule (stop iff score > 0).

    For t < T the score is the discounted reward minus the fitted
    continuation value; the final period scores the reward itself, i.e.
    exercise whenever in the money.
    """
    n_periods = features.n_periods
    if lsm.weights.shape != (n_periods - 1, features.n_features):
        raise ValueError("LSM weights do not match the feature tensor")
    scores = np.empty((features.n_paths, n_periods))
    fitted = np.einsum("otk,tk->ot", features.values[:, :-1, :], lsm.weights)
    scores[:, :-1] = rewards.reward[:, :-1] - fitted
    scores[:, -1] = rewards.reward[:, -1]
    return scores


def lsm_stopping_times(
    lsm: LsmWeights, features: FeatureTensor, rewards: RewardSet
) -> np.ndarray:
    return stopping_times_from_scores(lsm_scores(lsm, features, rewards))


def eval_lsm(lsm: LsmWeights, features: FeatureTensor, rewards: RewardSet) -> float:
    """Sample-average reward of the LSM stopping rule."""
    tau = lsm_stopping_times(lsm, features, rewards)
    return float(rewards_at_stop(tau, rewards).mean())


def save_lsm_weights(path: str | Path, lsm: LsmWeights) -> None:
    from .policy import save_weights

    save_weights(path, lsm)


def load_lsm_weights(path: str | Path) -> LsmWeights:
    from .policy import _read_weight_csv

    mat, fingerprint = _read_weight_csv(path)
    return LsmWeights(weights=mat, basis_fingerprint=fingerprint)
