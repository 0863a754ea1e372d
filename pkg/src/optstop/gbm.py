"""Correlated multi-asset geometric Brownian motion simulation."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import path_keys, standard_normals

_DUMP_MAGIC = b"OSTRAJ01"


@dataclass(frozen=True)
class GbmModel:
    """Parameters of the multi-asset price process.

    Attributes
    ----------
    n_assets : int
        Number of underlying assets.
    rate_r : float
        Annualized drift / risk-free rate.
    vol_sigma : float
        Annualized volatility, shared by all assets.
    corr_rho : float
        Constant pairwise correlation between asset log-returns, in [0, 1).
    initial_price : float
        Common starting price of every asset at time 0.
    n_periods : int
        Number of exercise dates; prices are stored for t = 1..n_periods.
    horizon_years : float
        Calendar length of the horizon in years.
    """

    n_assets: int
    rate_r: float
    vol_sigma: float
    corr_rho: float
    initial_price: float
    n_periods: int
    horizon_years: float

    def __post_init__(self):
        if self.n_assets < 1:
            raise ValueError("n_assets must be >= 1")
        if self.vol_sigma < 0:
            raise ValueError("vol_sigma must be >= 0")
        if not self.initial_price > 0:
            raise ValueError("initial_price must be > 0")
        if self.n_periods < 1:
            raise ValueError("n_periods must be >= 1")
        if not self.horizon_years > 0:
            raise ValueError("horizon_years must be > 0")
        if not 0.0 <= self.corr_rho < 1.0:
            raise ValueError(
                "corr_rho must lie in [0, 1) for a positive-definite "
                "equicorrelation matrix"
            )

    @property
    def dt(self) -> float:
        return self.horizon_years / self.n_periods


@dataclass(frozen=True)
class TrajectorySet:
    """Simulated price paths, shape (n_paths, n_periods, n_assets)."""

    prices: np.ndarray
    seed: int

    def __post_init__(self):
        if self.prices.ndim != 3:
            raise ValueError("prices must be a 3-d array (paths, periods, assets)")

    @property
    def n_paths(self) -> int:
        return self.prices.shape[0]

    @property
    def n_periods(self) -> int:
        return self.prices.shape[1]

    @property
    def n_assets(self) -> int:
        return self.prices.shape[2]


def correlation_factor(n_assets: int, rho: float) -> np.ndarray:
    """Lower-triangular Cholesky factor of the equicorrelation matrix."""
    corr = np.full((n_assets, n_assets), rho)
    np.fill_diagonal(corr, 1.0)
    return np.linalg.cholesky(corr)


def simulate_gbm(
    model: GbmModel, n_paths: int, seed: int, chunk_size: int = 16384
) -> TrajectorySet:
    """Simulate geometric Brownian motion trajectories.

    Each path gets its own counter-based random stream derived from
    ``(seed, path index)``, so the output is a pure function of
    ``(model, n_paths, seed)`` regardless of chunking or thread count.
    Log-price increments are ``(r - sigma^2/2)*dt + sigma*sqrt(dt)*z`` with
    ``z`` standard normal, correlated across assets through the Cholesky
    factor of the equicorrelation matrix. Time 0 is not an exercise date;
    stored prices cover t = 1..n_periods.

    Parameters
    ----------
    model : GbmModel
    n_paths : int
        Number of trajectories, >= 1.
    seed : int
        64-bit stream seed.
    chunk_size : int
        Paths processed per block; affects memory use only, never values.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    n, t_len = model.n_assets, model.n_periods
    dt = model.dt
    drift = (model.rate_r - 0.5 * model.vol_sigma**2) * dt
    scale = model.vol_sigma * np.sqrt(dt)
    chol = None if model.corr_rho == 0.0 else correlation_factor(n, model.corr_rho)
    tgrid = np.arange(1, t_len + 1, dtype=np.float64)[None, :, None]

    prices = np.empty((n_paths, t_len, n), dtype=np.float64)
    for start in range(0, n_paths, chunk_size):
        count = min(chunk_size, n_paths - start)
        keys = path_keys(seed, start, count)
        z = standard_normals(keys, t_len * n).reshape(count, t_len, n)
        if chol is not None:
            z = z @ chol.T
        np.cumsum(z, axis=1, out=z)
        prices[start : start + count] = model.initial_price * np.exp(
            drift * tgrid + scale * z
        )
    return TrajectorySet(prices=prices, seed=int(seed))


def save_trajectories(path: str | Path, traj: TrajectorySet) -> None:
    """Dump trajectories as a small header plus row-major float64 payload."""
    p = traj.prices
    header = _DUMP_MAGIC + struct.pack(
        "<QQQQ", p.shape[0], p.shape[1], p.shape[2], traj.seed & 0xFFFFFFFFFFFFFFFF
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_trajectories(path: str | Path) -> TrajectorySet:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _DUMP_MAGIC:
            raise ValueError(f"not a trajectory dump: bad magic {magic!r}")
        n_paths, n_periods, n_assets, seed = struct.unpack("<QQQQ", fh.read(32))
        data = np.frombuffer(fh.read(), dtype="<f8")
    expected = n_paths * n_periods * n_assets
    if data.size != expected:
        raise ValueError(f"truncated dump: {data.size} values, expected {expected}")
    prices = data.reshape(n_paths, n_periods, n_assets).astype(np.float64)
    return TrajectorySet(prices=prices, seed=int(seed))
