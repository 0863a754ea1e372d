"""Basis-function families and feature tensor construction."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .gbm import TrajectorySet
from .payoff import RewardSet


class BasisFamily(Enum):
    ONE = "one"
    PRICES = "prices"
    PAYOFF = "payoff"
    KOIND = "KOind"
    PRICES_KO = "pricesKO"
    MAXPRICE_KO = "maxpriceKO"
    MAX2PRICE_KO = "max2priceKO"
    PRICES2_KO = "prices2KO"


_BY_LOWER = {f.value.lower(): f for f in BasisFamily}


def family_width(family: BasisFamily, n_assets: int) -> int:
    if family in (BasisFamily.PRICES, BasisFamily.PRICES_KO):
        return n_assets
    if family is BasisFamily.PRICES2_KO:
        return n_assets * (n_assets + 1) // 2
    return 1


@dataclass(frozen=True)
class BasisSpec:
    """Ordered list of basis families; column order follows declaration order."""

    families: tuple[BasisFamily, ...]
    standardize: bool = False

    def __post_init__(self):
        if not self.families:
            raise ValueError("at least one basis family is required")
        if len(set(self.families)) != len(self.families):
            raise ValueError("duplicate basis families in spec")

    @classmethod
    def parse(cls, text: str, standardize: bool = False) -> "BasisSpec":
        """Parse a comma-separated, case-insensitive family list.

        Example: ``"pricesKO,KOind,payoff"``; declaration order is kept.
        """
        families = []
        for raw in text.split(","):
            name = raw.strip().lower()
            if name not in _BY_LOWER:
                known = ", ".join(f.value for f in BasisFamily)
                raise ValueError(f"unknown basis family {raw!r}; known: {known}")
            families.append(_BY_LOWER[name])
        return cls(families=tuple(families), standardize=standardize)

    def canonical(self) -> str:
        return ",".join(f.value for f in self.families)

    def n_features(self, n_assets: int) -> int:
        return sum(family_width(f, n_assets) for f in self.families)

    def column_labels(self, n_assets: int) -> list[str]:
        labels: list[str] = []
        for fam in self.families:
            if fam is BasisFamily.PRICES:
                labels += [f"price{i + 1}" for i in range(n_assets)]
            elif fam is BasisFamily.PRICES_KO:
                labels += [f"priceKO{i + 1}" for i in range(n_assets)]
            elif fam is BasisFamily.PRICES2_KO:
                labels += [
                    f"price2KO_{i + 1}_{j + 1}"
                    for i in range(n_assets)
                    for j in range(i, n_assets)
                ]
            else:
                labels.append(fam.value)
        return labels


@dataclass(frozen=True)
class FeatureTransform:
    """Affine per-column rescaling fitted on a training tensor."""

    mean: np.ndarray
    scale: np.ndarray


@dataclass(frozen=True)
class FeatureTensor:
    """Realized features, shape (n_paths, n_periods, n_features).

    ``feature_bound_Q`` is the maximum absolute entry, the bound used by the
    generalization-bound calculators. ``payoff_column`` locates the
    undiscounted-payoff column when the family list declares one.
    """

    values: np.ndarray
    spec: BasisSpec
    feature_bound_Q: float
    payoff_column: int | None
    column_labels: tuple[str, ...]
    transform: FeatureTransform | None = field(default=None)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def n_periods(self) -> int:
        return self.values.shape[1]

    @property
    def n_features(self) -> int:
        return self.values.shape[2]

    @property
    def fingerprint(self) -> str:
        return self.spec.canonical()


def build_features(
    trajectories: TrajectorySet,
    rewards: RewardSet,
    spec: BasisSpec,
    transform: FeatureTransform | None = None,
) -> FeatureTensor:
    """Materialize the feature tensor for a basis spec.

    Column semantics: ONE -> 1; PRICES -> p_i(t); PAYOFF -> undiscounted
    payoff; KOind -> knock-out indicator y(t); pricesKO -> p_i(t)*y(t);
    maxpriceKO / max2priceKO -> largest / second-largest knock-out adjusted
    price; prices2KO -> p_i(t)*p_j(t)*y(t) for i <= j.

    When ``spec.standardize`` is on, every non-ONE column is affinely
    rescaled to zero mean / unit variance over this tensor and the fitted
    transform is stored for reuse on a test set (pass it via ``transform``).
    Degenerate constant columns are left unscaled.
    """
    prices = trajectories.prices
    n_paths, n_periods, n_assets = prices.shape
    if rewards.reward.shape != (n_paths, n_periods):
        raise ValueError("rewards do not match the trajectory set")
    k_total = spec.n_features(n_assets)

    values = np.empty((n_paths, n_periods, k_total), dtype=np.float64)
    payoff_column = None
    col = 0
    for fam in spec.families:
        width = family_width(fam, n_assets)
        block = values[:, :, col : col + width]
        if fam is BasisFamily.ONE:
            block[:, :, 0] = 1.0
        elif fam is BasisFamily.PRICES:
            block[:] = prices
        elif fam is BasisFamily.PAYOFF:
            block[:, :, 0] = rewards.payoff_undiscounted
            payoff_column = col
        elif fam is BasisFamily.KOIND:
            block[:, :, 0] = rewards.knockout_alive
        elif fam is BasisFamily.PRICES_KO:
            block[:] = prices * rewards.knockout_alive[:, :, None]
        elif fam in (BasisFamily.MAXPRICE_KO, BasisFamily.MAX2PRICE_KO):
            if fam is BasisFamily.MAX2PRICE_KO and n_assets < 2:
                raise ValueError("max2priceKO requires at least two assets")
            adj = prices * rewards.knockout_alive[:, :, None]
            order = -1 if fam is BasisFamily.MAXPRICE_KO else -2
            block[:, :, 0] = np.sort(adj, axis=2)[:, :, order]
        elif fam is BasisFamily.PRICES2_KO:
            j = 0
            for a in range(n_assets):
                for b in range(a, n_assets):
                    block[:, :, j] = prices[:, :, a] * prices[:, :, b]
                    j += 1
            block *= rewards.knockout_alive[:, :, None]
        col += width

    if spec.standardize:
        if transform is None:
            transform = _fit_transform(values, spec, n_assets)
        values -= transform.mean
        values /= transform.scale
    elif transform is not None:
        raise ValueError("transform given but spec does not standardize")

    return FeatureTensor(
        values=values,
        spec=spec,
        feature_bound_Q=float(np.abs(values).max()),
        payoff_column=payoff_column,
        column_labels=tuple(spec.column_labels(n_assets)),
        transform=transform,
    )


def _fit_transform(values, spec: BasisSpec, n_assets: int) -> FeatureTransform:
    k_total = values.shape[2]
    mean = np.zeros(k_total)
    scale = np.ones(k_total)
    col = 0
    for fam in spec.families:
        width = family_width(fam, n_assets)
        if fam is not BasisFamily.ONE:
            flat = values[:, :, col : col + width].reshape(-1, width)
            m = flat.mean(axis=0)
            s = flat.std(axis=0)
            keep = s > 0.0
            mean[col : col + width] = np.where(keep, m, 0.0)
            scale[col : col + width] = np.where(keep, s, 1.0)
        col += width
    return FeatureTransform(mean=mean, scale=scale)
