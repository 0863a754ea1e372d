"""Counter-based random number generation.

Every draw is a pure function of a 64-bit seed and a counter, so simulated
trajectories come out bit-identical no matter how the work is chunked or
how many threads run it. Standard normals are produced by inverse-CDF
transform of hashed uniforms.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_PHI = np.uint64(0x9E3779B97F4A7C15)  # 2**64 / golden ratio, odd
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = 0xFFFFFFFFFFFFFFFF


def mix64(x) -> np.ndarray:
    """Bijective 64-bit finalizer with full avalanche (splitmix-style)."""
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64) + _PHI
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def derive_seed(*parts: int) -> int:
    """Fold integers into a single 64-bit seed; order-sensitive."""
    s = np.uint64(0)
    with np.errstate(over="ignore"):
        for p in parts:
            s = mix64(s + np.uint64(int(p) & _MASK64))[()]
    return int(s)


def path_keys(seed: int, start: int, count: int) -> np.ndarray:
    """Stream keys for trajectories ``start .. start+count-1`` under ``seed``."""
    base = mix64(np.uint64(int(seed) & _MASK64))
    idx = np.arange(start, start + count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(base ^ (idx * _PHI))


def standard_normals(keys: np.ndarray, n_draws: int) -> np.ndarray:
    """Standard normals of shape ``(len(keys), n_draws)``.

    Draw ``j`` of stream ``k`` is ``ndtri(u)`` where ``u`` is built from the
    top 53 bits of ``mix64(k ^ (j+1)*phi)``, offset by half an ulp so that
    ``u`` lies strictly inside (0, 1).
    """
    idx = np.arange(1, n_draws + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = mix64(keys[:, None] ^ (idx[None, :] * _PHI))
    u = ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)
