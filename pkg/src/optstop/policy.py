"""Linear stopping policies: hard and sigmoid-smoothed evaluation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .basis import FeatureTensor
from .payoff import RewardSet


def logistic(u):
    """Stable logistic response e^u / (1 + e^u).

    Uses the branch form 1/(1+e^-u) for u >= 0 and e^u/(1+e^u) otherwise,
    so no argument overflows. Accepts scalars or arrays.
    """
    u_arr = np.asarray(u, dtype=np.float64)
    t = np.exp(-np.abs(u_arr))
    out = np.where(u_arr >= 0.0, 1.0 / (1.0 + t), t / (1.0 + t))
    if np.ndim(u) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class WeightMatrix:
    """Policy weights, one row of length K per period."""

    weights: np.ndarray
    basis_fingerprint: str = ""

    def __post_init__(self):
        if self.weights.ndim != 2:
            raise ValueError("weights must be 2-d (periods x features)")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")

    @classmethod
    def zeros(cls, n_periods: int, n_features: int, fingerprint: str = "") -> "WeightMatrix":
        return cls(np.zeros((n_periods, n_features)), fingerprint)

    @property
    def n_periods(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]


def policy_scores(w: WeightMatrix, features: FeatureTensor) -> np.ndarray:
    """Per-(path, period) inner products b_t . phi(x(w, t))."""
    if w.weights.shape != (features.n_periods, features.n_features):
        raise ValueError(
            f"weight shape {w.weights.shape} does not match features "
            f"({features.n_periods}, {features.n_features})"
        )
    return np.einsum("otk,tk->ot", features.values, w.weights)


def stopping_times_from_scores(scores: np.ndarray) -> np.ndarray:
    """First period with a strictly positive score, else inf.

    Returns a float array with values in {1..T} or np.inf (never stop).
    """
    hit = scores > 0.0
    any_hit = hit.any(axis=1)
    first = hit.argmax(axis=1)
    return np.where(any_hit, first + 1.0, np.inf)


def stopping_times_deterministic(
    w: WeightMatrix, features: FeatureTensor
) -> np.ndarray:
    """Stopping time of the hard policy: stop iff b_t . phi > 0."""
    return stopping_times_from_scores(policy_scores(w, features))


def rewards_at_stop(tau: np.ndarray, rewards: RewardSet) -> np.ndarray:
    """Reward collected at each path's stopping time (0 for tau = inf)."""
    out = np.zeros(tau.shape[0])
    stopped = np.isfinite(tau)
    idx = tau[stopped].astype(np.int64) - 1
    out[stopped] = rewards.reward[np.flatnonzero(stopped), idx]
    return out


def eval_deterministic(
    w: WeightMatrix, features: FeatureTensor, rewards: RewardSet
) -> float:
    """Sample-average reward of the hard policy."""
    tau = stopping_times_deterministic(w, features)
    return float(rewards_at_stop(tau, rewards).mean())


def stop_distribution(w: WeightMatrix, features: FeatureTensor) -> np.ndarray:
    """Per-path stopping distribution of the smoothed policy.

    Column t < T holds P(stop at t+1) = prod_{s<=t}(1-sigma_s) * sigma_t,
    the last column holds the never-stop probability. Rows sum to 1.
    """
    return _stop_probabilities(policy_scores(w, features))


def _stop_probabilities(scores: np.ndarray) -> np.ndarray:
    n_paths, n_periods = scores.shape
    sig = logistic(scores)
    survive = np.cumprod(1.0 - sig, axis=1)
    probs = np.empty((n_paths, n_periods + 1))
    probs[:, 0] = sig[:, 0]
    probs[:, 1:n_periods] = survive[:, : n_periods - 1] * sig[:, 1:]
    probs[:, n_periods] = survive[:, n_periods - 1]
    return probs


def randomized_values(
    w: WeightMatrix, features: FeatureTensor, rewards: RewardSet
) -> np.ndarray:
    """Per-path expected reward of the smoothed policy (stop randomness only)."""
    probs = stop_distribution(w, features)
    return np.sum(probs[:, : features.n_periods] * rewards.reward, axis=1)


def eval_randomized(
    w: WeightMatrix, features: FeatureTensor, rewards: RewardSet
) -> float:
    """Sample-average expected reward of the smoothed policy."""
    return float(randomized_values(w, features, rewards).mean())


class ThresholdForm(Enum):
    RPO_ONE_PAYOFF = "rpo"
    LSM_ONE_PAYOFF = "lsm"


def extract_thresholds(w, form: ThresholdForm, beta: float):
    """Per-period payoff thresholds of a (one, payoff) policy.

    For RPO_ONE_PAYOFF the rows are hard-policy weights and the threshold is
    -b_one / b_payoff where b_payoff > 0. For LSM_ONE_PAYOFF the rows are
    continuation-value regression weights and the threshold is
    b_one / (beta^t - b_payoff) where the denominator is positive; a final
    always-exercise period (threshold 0) is appended when given continuation
    weights for periods 1..T-1.

    Returns (thresholds, defined): a float array with NaN where the
    threshold is undefined, and the matching boolean mask.
    """
    from .lsm import LsmWeights  # local import to avoid a cycle

    append_final = isinstance(w, LsmWeights)
    fingerprint = getattr(w, "basis_fingerprint", "")
    mat = w.weights if hasattr(w, "weights") else np.asarray(w, dtype=float)
    if mat.ndim != 2 or mat.shape[1] != 2:
        raise ValueError("threshold extraction needs a (one, payoff) architecture")
    if fingerprint and fingerprint != "one,payoff":
        raise ValueError(
            f"threshold extraction needs basis 'one,payoff', got {fingerprint!r}"
        )

    b_one, b_payoff = mat[:, 0], mat[:, 1]
    periods = np.arange(1, mat.shape[0] + 1, dtype=np.float64)
    if form is ThresholdForm.RPO_ONE_PAYOFF:
        defined = b_payoff > 0.0
        denom = b_payoff
        numer = -b_one
    elif form is ThresholdForm.LSM_ONE_PAYOFF:
        denom = beta**periods - b_payoff
        defined = denom > 0.0
        numer = b_one
    else:  # pragma: no cover - exhaustive enum
        raise ValueError(f"unknown threshold form {form}")

    thresholds = np.full(mat.shape[0], np.nan)
    thresholds[defined] = numer[defined] / denom[defined]
    if append_final:
        thresholds = np.append(thresholds, 0.0)
        defined = np.append(defined, True)
    return thresholds, defined


def save_weights(path: str | Path, w) -> None:
    """Write a weight matrix as CSV, one row per period.

    The header row carries the basis fingerprint (family names, padded with
    empty cells up to the K columns of the matrix).
    """
    k = w.weights.shape[1]
    fingerprint = getattr(w, "basis_fingerprint", "")
    cells = fingerprint.split(",") if fingerprint else [f"w{i + 1}" for i in range(k)]
    if len(cells) > k:
        raise ValueError("fingerprint has more entries than weight columns")
    cells = cells + [""] * (k - len(cells))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cells)
        for row in w.weights:
            writer.writerow([repr(float(v)) for v in row])


def load_weights(path: str | Path) -> WeightMatrix:
    """Read a weight CSV written by :func:`save_weights`."""
    mat, fingerprint = _read_weight_csv(path)
    return WeightMatrix(weights=mat, basis_fingerprint=fingerprint)


def _read_weight_csv(path: str | Path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise ValueError(f"empty weight file {path}")
    header = rows[0]
    mat = np.array([[float(v) for v in row] for row in rows[1:]], dtype=np.float64)
    if mat.ndim != 2 or mat.shape[1] != len(header):
        raise ValueError(f"malformed weight file {path}")
    return mat, ",".join(c for c in header if c)
