"""Matérn covariance, the principal irregular term, and covariance matrices.

The modified Bessel function of the second kind is evaluated here rather
than borrowed: Temme's series for small arguments, Steed's continued
fraction for large ones, then upward recurrence in the order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DesignError, DomainError

INTEGER_TOL = 1e-12
_EPS = 1e-16
_MAX_ITER = 10_000

# Taylor coefficients of 1/Gamma(1 + x) about x = 0.
_RGAMMA = np.array([
    1.0, 0.5772156649015329, -0.6558780715202539, -0.04200263503409524,
    0.16653861138229148, -0.04219773455554433, -0.009621971527876973,
    0.0072189432466631, -0.0011651675918590652, -0.00021524167411495098,
    0.0001280502823881162, -2.013485478078824e-05, -1.2504934821426706e-06,
    1.133027231981696e-06, -2.056338416977607e-07, 6.116095104481416e-09,
    5.002007644469223e-09, -1.18127457048702e-09, 1.0434267116911005e-10,
    7.782263439905071e-12, -3.696805618642206e-12, 5.100370287454476e-13,
    -2.0583260535665066e-14, -5.348122539423018e-15, 1.2267786282382608e-15,
    -1.1812593016974588e-16,
])


def is_integer(nu: float) -> bool:
    return abs(nu - round(nu)) <= INTEGER_TOL


def g_nu(s, nu: float):
    """Principal irregular term: s**(2 nu), times log(s) when nu is integral.

    Accepts scalars or arrays; ``s = 0`` maps to 0 exactly.
    """
    if nu <= 0:
        raise DomainError(f"nu must be positive, got {nu}")
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("g_nu requires s >= 0")
    out = np.zeros_like(arr)
    pos = arr > 0
    sp = arr[pos]
    if is_integer(nu):
        p = int(round(nu))
        out[pos] = sp ** (2 * p) * np.log(sp)
    else:
        out[pos] = sp ** (2.0 * nu)
    return out if out.ndim else float(out)


def _temme_gammas(mu: float):
    """Return gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu) for |mu| <= 1/2."""
    even = _RGAMMA[1::2]            # c1, c3, ... multiply mu^0, mu^2, ...
    odd = _RGAMMA[0::2]             # c0, c2, ...
    m2 = mu * mu
    gam1 = -np.polyval(even[::-1], m2)
    gam2 = np.polyval(odd[::-1], m2)
    return gam1, gam2, gam2 - mu * gam1, gam2 + mu * gam1


def _series_small(mu: float, x: np.ndarray):
    """K_mu and K_{mu+1} by Temme's series, valid for 0 < x <= 2."""
    x2 = 0.5 * x
    pimu = math.pi * mu
    fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
    d = -np.log(x2)
    e = mu * d
    with np.errstate(invalid="ignore", divide="ignore"):
        fact2 = np.where(np.abs(e) < _EPS, 1.0, np.sinh(e) / np.where(e == 0, 1.0, e))
    gam1, gam2, gampl, gammi = _temme_gammas(mu)
    ff = fact * (gam1 * np.cosh(e) + gam2 * fact2 * d)
    total = ff.copy()
    ee = np.exp(e)
    p = 0.5 * ee / gampl
    q = 0.5 / (ee * gammi)
    c = np.ones_like(x)
    dd = x2 * x2
    total1 = p.copy()
    active = np.ones(x.shape, dtype=bool)
    for i in range(1, _MAX_ITER):
        ff = (i * ff + p + q) / (i * i - mu * mu)
        c = c * dd / i
        p = p / (i - mu)
        q = q / (i + mu)
        delta = c * ff
        total = np.where(active, total + delta, total)
        total1 = np.where(active, total1 + c * (p - i * ff), total1)
        active &= np.abs(delta) >= np.abs(total) * _EPS
        if not active.any():
            break
    return total, total1 * (2.0 / x)


def _steed_large(mu: float, x: np.ndarray):
    """K_mu and K_{mu+1} by Steed's continued fraction, for x > 2."""
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = d.copy()
    delh = d.copy()
    q1 = np.zeros_like(x)
    q2 = np.ones_like(x)
    a1 = 0.25 - mu * mu
    q = np.full_like(x, a1)
    c = np.full_like(x, a1)
    a = -a1
    s = 1.0 + q * delh
    active = np.ones(x.shape, dtype=bool)
    for i in range(1, _MAX_ITER):
        a -= 2 * i
        c = -a * c / (i + 1.0)
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q = q + c * qnew
        b = b + 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h = np.where(active, h + delh, h)
        dels = q * delh
        s = np.where(active, s + dels, s)
        active &= np.abs(dels / s) >= _EPS
        if not active.any():
            break
    h = a1 * h
    kmu = np.sqrt(math.pi / (2.0 * x)) * np.exp(-x) / s
    k1 = kmu * (mu + x + 0.5 - h) / x
    return kmu, k1


def bessel_k(order: float, x):
    """Modified Bessel function of the second kind, K_order(x).

    Parameters
    ----------
    order : float
        Order in [0, 15].
    x : float or ndarray
        Strictly positive arguments.
    """
    if not 0 <= order <= 15:
        raise DomainError(f"order must lie in [0, 15], got {order}")
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("bessel_k requires x > 0")
    flat = arr.ravel()
    nl = int(order + 0.5)
    mu = order - nl
    kmu = np.empty_like(flat)
    k1 = np.empty_like(flat)
    small = flat <= 2.0
    if small.any():
        kmu[small], k1[small] = _series_small(mu, flat[small])
    if (~small).any():
        kmu[~small], k1[~small] = _steed_large(mu, flat[~small])
    xi2 = 2.0 / flat
    for i in range(1, nl + 1):
        kmu, k1 = k1, (mu + i) * xi2 * k1 + kmu
    out = kmu.reshape(arr.shape)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class RadialKernel:
    """A stationary isotropic covariance k(r) with a declared smoothness."""

    nu: float
    sigma: float = 1.0
    name: str = "radial"
    func: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self.func(r)

    @property
    def variance(self) -> float:
        return self.sigma ** 2


def power_exponential(nu: float, c: float = 1.0, sigma: float = 1.0) -> RadialKernel:
    """k(r) = sigma^2 exp(-c r^(2 nu)), valid for 0 < nu <= 1."""
    if not 0 < nu <= 1:
        raise DomainError("power exponential needs 0 < nu <= 1")
    return RadialKernel(nu, sigma, "power_exponential",
                        lambda r: sigma ** 2 * np.exp(-c * r ** (2 * nu)))


@dataclass(frozen=True)
class CovarianceModel:
    """Matérn parameters: smoothness ``nu``, inverse range ``alpha``, scale ``sigma``.

    The irregular-term coefficient of the expansion about zero lag is exposed
    as :attr:`beta_star`; the remainder exponent of that expansion is not
    modelled.
    """

    nu: float
    alpha: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        for name in ("nu", "alpha", "sigma"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive, got {v}")

    @property
    def variance(self) -> float:
        return self.sigma ** 2

    @property
    def beta_star(self) -> float:
        """Coefficient multiplying G_nu in the small-lag expansion."""
        nu, a, s2 = self.nu, self.alpha, self.sigma ** 2
        if is_integer(nu):
            p = int(round(nu))
            return 2.0 * s2 * (-1) ** (p + 1) * (a / 2) ** (2 * p) / (
                math.factorial(p - 1) * math.factorial(p))
        return -math.pi * s2 * a ** (2 * nu) / (
            math.gamma(nu) * math.sin(nu * math.pi) * 2 ** (2 * nu) * math.gamma(1 + nu))

    def __call__(self, r):
        return matern(self, r)


def matern(model: CovarianceModel, r):
    """sigma^2 (alpha r)^nu K_nu(alpha r) / (2^(nu-1) Gamma(nu)); sigma^2 at r = 0."""
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("distances must be nonnegative")
    out = np.full(arr.shape, model.variance)
    pos = arr > 0
    if pos.any():
        z = model.alpha * arr[pos]
        nu = model.nu
        lognorm = (nu - 1) * math.log(2.0) + math.lgamma(nu)
        out[pos] = model.variance * np.exp(nu * np.log(z) - lognorm) * bessel_k(nu, z)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SiteSet:
    """Ordered, distinct sampling sites in one or two dimensions."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[1] not in (1, 2) or len(pts) == 0:
            raise DesignError("sites must be a nonempty (n, 1) or (n, 2) array")
        if not np.all(np.isfinite(pts)):
            raise DesignError("site coordinates must be finite")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def from_sequence(cls, points: Sequence) -> "SiteSet":
        return cls(np.asarray(points, dtype=float))


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def covariance_matrix(model, sites: SiteSet) -> np.ndarray:
    """Dense covariance over ``sites``; exactly symmetric with sigma^2 on the diagonal."""
    if not isinstance(sites, SiteSet):
        sites = SiteSet(np.asarray(sites, dtype=float))
    dist = pairwise_distances(sites.points)
    n = len(sites)
    iu = np.triu_indices(n, k=1)
    upper = dist[iu]
    if upper.size and upper.min() == 0.0:
        raise DesignError("duplicate sites make the covariance singular")
    K = np.empty((n, n))
    vals = model(upper)
    K[iu] = vals
    K[(iu[1], iu[0])] = vals
    np.fill_diagonal(K, model.variance)
    return K
