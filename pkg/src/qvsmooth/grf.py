"""Exact Gaussian random field simulation by dense Cholesky factorisation.

Normal draws come from a counter-based stream so that any replication can
be regenerated on its own:

* bit generator: Philox4x64-10 with key ``(seed, replication_index)``
  (``numpy.random.Philox``).  Block k = 1, 2, ... is the cipher applied to
  the 256-bit counter ``(k, 0, 0, 0)`` and contributes its four 64-bit
  words in order;
* uniforms: ``u = ((w >> 11) + 0.5) * 2**-53`` for each raw 64-bit word ``w``,
  which lies strictly inside (0, 1);
* normals: ``z = ndtri(u)``, the inverse standard normal CDF.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .covariance import SiteSet, covariance_matrix
from .errors import DomainError, IllConditionedCovarianceError

JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)
MAX_SITES = 10_000
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True, eq=False)
class SamplerState:
    master_seed: int
    cholesky_factor: np.ndarray
    jitter_used: float
    variance: float

    @property
    def n(self) -> int:
        return self.cholesky_factor.shape[0]


def factor(model, sites, master_seed: int = 0, ladder=JITTER_LADDER) -> SamplerState:
    """Cholesky factor of the covariance, adding the smallest workable jitter."""
    if not isinstance(sites, SiteSet):
        sites = SiteSet(np.asarray(sites, dtype=float))
    if len(sites) > MAX_SITES:
        raise DomainError(f"at most {MAX_SITES} sites supported")
    K = covariance_matrix(model, sites)
    s2 = model.variance
    for jit in ladder:
        Kj = K + jit * s2 * np.eye(len(K)) if jit else K
        try:
            L = np.linalg.cholesky(Kj)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(L)):
            continue
        if np.max(np.abs(L @ L.T - Kj)) > 1e-8 * s2:
            continue
        L.flags.writeable = False
        return SamplerState(int(master_seed) & _MASK64, L, jit * s2, s2)
    raise IllConditionedCovarianceError(
        f"covariance not factorisable with jitter up to {ladder[-1]:g} sigma^2")


def standard_normals(seed: int, index: int, size: int) -> np.ndarray:
    """``size`` standard normals from the stream keyed by (seed, index)."""
    bg = np.random.Philox(key=np.array([seed & _MASK64, index & _MASK64], dtype=np.uint64))
    words = bg.random_raw(size)
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return ndtri(u)


def sample(state: SamplerState, replication_index: int) -> np.ndarray:
    z = standard_normals(state.master_seed, int(replication_index), state.n)
    return state.cholesky_factor @ z
