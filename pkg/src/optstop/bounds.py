"""Closed-form complexity and generalization-bound calculators."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class NormType(Enum):
    L1 = "L1"
    L2 = "L2"
    LINF = "LINF"


@dataclass(frozen=True)
class BoundInputs:
    """Constants feeding the bound formulas.

    ``radius_B`` bounds the chosen norm of the stacked policy weights,
    ``feature_bound_Q`` the absolute value of every feature,
    ``reward_bound_G`` every reward. ``delta`` is the confidence level of
    the high-probability lower bounds.
    """

    norm_type: NormType
    radius_B: float
    feature_bound_Q: float
    reward_bound_G: float
    K: int
    T: int
    n_paths: int
    delta: float = 0.05

    def __post_init__(self):
        for name in ("radius_B", "feature_bound_Q", "reward_bound_G"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.K < 1 or self.T < 1 or self.n_paths < 1:
            raise ValueError("K, T and n_paths must be >= 1")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")


def rademacher_bound(inp: BoundInputs) -> float:
    """Complexity bound of the smoothed-policy reward class.

    For weights confined to a norm ball of radius B the bound is
    sqrt(2) * (G + 1) * B * Q * factor / sqrt(n), with factor
    sqrt(2*log(2KT)) for the L1 ball, sqrt(KT) for L2, and KT for Linf.
    """
    kt = inp.K * inp.T
    if inp.norm_type is NormType.L1:
        factor = np.sqrt(2.0 * np.log(2.0 * kt))
    elif inp.norm_type is NormType.L2:
        factor = np.sqrt(float(kt))
    else:
        factor = float(kt)
    lead = np.sqrt(2.0) * (inp.reward_bound_G + 1.0)
    return float(lead * inp.radius_B * inp.feature_bound_Q * factor / np.sqrt(inp.n_paths))


def generalization_lower_bound(
    j_hat: float, inp: BoundInputs, empirical: bool = False
) -> float:
    """High-probability lower bound on the true smoothed-policy reward.

    Ordinary form: j_hat - 2R - G * sqrt(log(1/delta) / (2n)). The empirical
    form replaces the deviation penalty with 3G * sqrt(log(2/delta) / (2n)).
    R is :func:`rademacher_bound` of the same inputs.
    """
    r = rademacher_bound(inp)
    if empirical:
        penalty = 3.0 * inp.reward_bound_G * np.sqrt(
            np.log(2.0 / inp.delta) / (2.0 * inp.n_paths)
        )
    else:
        penalty = inp.reward_bound_G * np.sqrt(
            np.log(1.0 / inp.delta) / (2.0 * inp.n_paths)
        )
    return float(j_hat - 2.0 * r - penalty)
