"""Deterministic targets for the variation statistics and their ratios.

Every target is a weighted sum over pairs of stencil nodes,
``sum prod * G(dist)``, so all three families share :class:`PairSum`.
The ``f_*`` functions use the irregular term with unit coefficient; the
ratio functions never need that coefficient because it cancels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .covariance import INTEGER_TOL, g_nu, is_integer
from .designs import CurveDesign, LatticeDesign, LineTransect
from .errors import ConfigurationError, DomainError
from .qvar import curve_stencil, lattice_stencil, line_stencil

_CHUNK = 128


@dataclass(frozen=True)
class PairSum:
    """``sum_j prod[j] * G(exp(logd[j]))`` over all node pairs of a stencil.

    ``cancel`` lists the integers p at which ``sum prod * d**(2p)`` vanishes
    identically for this family (polynomial annihilation).
    """

    prod: np.ndarray
    logd: np.ndarray
    cancel: tuple

    def exact(self, nu: float) -> float:
        if nu == 0:
            return float(np.sum(self.prod))
        d = np.exp(self.logd)
        return float(np.sum(self.prod * g_nu(d, nu)))

    def _kernel(self, nu: float) -> np.ndarray:
        if nu == 0:
            return np.ones_like(self.logd)
        p = int(round(nu))
        delta = nu - p
        if p in self.cancel and abs(delta) < 0.5:
            base = np.exp(2 * p * self.logd)
            if abs(delta) <= INTEGER_TOL:
                return base * self.logd
            # s^(2nu) - (1 - 4 delta^2) s^(2p); the subtracted piece sums to
            # zero wherever the family annihilates degree-2p polynomials.
            return base * (np.expm1(2 * delta * self.logd) + 4 * delta * delta)
        return np.exp(2 * nu * self.logd)

    def smooth(self, nus) -> np.ndarray:
        """Sums with the kernel used for ratios, vectorised over ``nus``."""
        nus = np.atleast_1d(np.asarray(nus, dtype=float))
        out = np.empty(len(nus))
        plain = np.array([
            v > 0 and not (int(round(v)) in self.cancel and abs(v - round(v)) < 0.5)
            for v in nus
        ], dtype=bool)
        pi = np.flatnonzero(plain)
        for s in range(0, len(pi), _CHUNK):
            sel = pi[s:s + _CHUNK]
            out[sel] = np.exp(np.outer(2 * nus[sel], self.logd)) @ self.prod
        for j in np.flatnonzero(~plain):
            out[j] = float(np.sum(self.prod * self._kernel(nus[j])))
        return out


def _pairs(weights: np.ndarray, nodes: np.ndarray, dist) -> tuple[np.ndarray, np.ndarray]:
    k = weights.shape[1]
    prods, logs = [], []
    for a, b in combinations(range(k), 2):
        prods.append(weights[:, a] * weights[:, b])
        logs.append(np.log(dist(nodes[:, a], nodes[:, b])))
    return np.concatenate(prods), np.concatenate(logs)


def line_pairs(design: LineTransect, theta: int, ell: int) -> PairSum:
    key = ("pairs-line", theta, ell)
    if key not in design._cache:
        st = line_stencil(design, theta, ell)
        prod, logd = _pairs(st.weights, st.nodes, lambda a, b: np.abs(b - a))
        design._cache[key] = PairSum(prod, logd, tuple(range(1, ell)))
    return design._cache[key]


def curve_pairs(design: CurveDesign, theta: int, ell: int) -> PairSum:
    key = ("pairs-curve", theta, ell)
    if key not in design._cache:
        st = curve_stencil(design, theta, ell)
        pts = design.points[st.index]
        prod, logd = _pairs(st.weights, pts, lambda a, b: np.hypot(*(b - a).T))
        design._cache[key] = PairSum(prod, logd, tuple(range(1, ell)))
    return design._cache[key]


def lattice_pairs(design: LatticeDesign, theta: int, ell: int) -> PairSum:
    key = ("pairs-lattice", theta, ell)
    if key not in design._cache:
        st = lattice_stencil(design, theta, ell)
        prod, logd = _pairs(st.weights, st.nodes, lambda a, b: np.hypot(*(b - a).T))
        design._cache[key] = PairSum(prod, logd, (1,))
    return design._cache[key]


def _open_check(nu: float, hi: float):
    if not 0 < nu < hi:
        raise DomainError(f"nu={nu} outside (0, {hi}); use ratio_F for endpoints")


def f_line(design: LineTransect, theta: int, ell: int, nu: float, beta_star: float = 1.0) -> float:
    _open_check(nu, ell)
    return 2.0 * beta_star * line_pairs(design, theta, ell).exact(nu)


def f_curve(design: CurveDesign, theta: int, ell: int, nu: float, beta_star: float = 1.0) -> float:
    _open_check(nu, ell)
    return 2.0 * beta_star * curve_pairs(design, theta, ell).exact(nu)


def f_lattice(design: LatticeDesign, theta: int, ell: int, nu: float, beta_star: float = 1.0) -> float:
    # ordered pairs of distinct corners: twice the unordered sum
    _open_check(nu, 2)
    return 2.0 * beta_star * lattice_pairs(design, theta, ell).exact(nu)


def grid_nodes(lo: float, hi: float, step: float) -> np.ndarray:
    """lo + k*step up to hi, with hi appended; integers land exactly when 1/step is whole."""
    k = int(math.floor((hi - lo) / step + 1e-9))
    inv = 1.0 / step
    if abs(inv - round(inv)) < 1e-9:
        nodes = lo + np.arange(k + 1) / round(inv)
    else:
        nodes = lo + np.arange(k + 1) * step
    if hi - nodes[-1] > 1e-12:
        nodes = np.append(nodes, hi)
    nodes[-1] = min(nodes[-1], hi)
    return nodes


_FAMILIES = {
    "line": (LineTransect, line_pairs),
    "curve": (CurveDesign, curve_pairs),
    "lattice": (LatticeDesign, lattice_pairs),
}


class RatioFunction:
    """nu -> f_2(nu) / f_1(nu) on the closed search interval [0, upper]."""

    def __init__(self, family: str, design, ell: int, upper: float | None = None):
        if family not in _FAMILIES:
            raise DomainError(f"unknown family {family!r}")
        cls, builder = _FAMILIES[family]
        if not isinstance(design, cls):
            raise DomainError(f"{family} ratio needs a {cls.__name__}")
        natural = 2.0 if family == "lattice" else float(ell)
        if family == "line":
            if upper is None:
                raise DomainError("the line ratio needs an explicit upper bound")
            if not 0 < upper <= ell:
                raise DomainError(f"need 0 < upper <= ell, got {upper}, ell={ell}")
        elif upper is None:
            upper = natural
        elif not 0 < upper <= natural:
            raise DomainError(f"upper bound must lie in (0, {natural}]")
        self.family = family
        self.ell = ell
        self.upper = float(upper)
        self.fine = builder(design, 1, ell)
        self.coarse = builder(design, 2, ell)
        self._grids: dict = {}

    def __call__(self, nu):
        arr = np.asarray(nu, dtype=float)
        if np.any(arr < 0) or np.any(arr > self.upper) or np.any(np.isnan(arr)):
            raise DomainError(f"nu outside [0, {self.upper}]")
        flat = arr.ravel()
        out = (self.coarse.smooth(flat) / self.fine.smooth(flat)).reshape(arr.shape)
        return out if out.ndim else float(out)

    def grid(self, step: float) -> tuple[np.ndarray, np.ndarray]:
        """Grid nodes k*step covering [0, upper] (upper included) and F on them."""
        if step not in self._grids:
            nodes = grid_nodes(0.0, self.upper, step)
            self._grids[step] = (nodes, self(nodes))
        return self._grids[step]


def ratio_function(family: str, design, ell: int, upper: float | None = None) -> RatioFunction:
    key = ("ratio", family, ell, upper)
    cache = design._cache
    if key not in cache:
        cache[key] = RatioFunction(family, design, ell, upper)
    return cache[key]


def ratio_F(family: str, design, ell: int, nu_star, upper: float | None = None):
    """Evaluate F at ``nu_star``; ``upper`` is M for lines and defaults otherwise."""
    return ratio_function(family, design, ell, upper)(nu_star)


def _h_pairs(ell: int) -> tuple[np.ndarray, np.ndarray]:
    coef, gap = [], []
    for k1, k2 in combinations(range(ell + 1), 2):
        coef.append((-1) ** (k1 + k2) * math.comb(ell, k1) * math.comb(ell, k2))
        gap.append(float(k2 - k1))
    return np.array(coef, dtype=float), np.array(gap)


def _h_terms(ell: int, nu: float) -> np.ndarray:
    coef, gap = _h_pairs(ell)
    return coef * g_nu(gap, nu)


def _h_term_table(ell: int, nus: np.ndarray) -> np.ndarray:
    """Rows of H_ell terms, one row per entry of ``nus``."""
    coef, gap = _h_pairs(ell)
    p = np.round(nus)
    on_int = np.abs(nus - p) <= INTEGER_TOL
    # pow rather than exp(x log k): the terms cancel heavily for large ell
    power = np.power(gap[None, :], np.where(on_int, 2 * p, 2 * nus)[:, None])
    power[on_int] *= np.log(gap)
    return coef * power


def h_ell(ell: int, nu: float) -> float:
    if not 1 <= ell <= 10:
        raise DomainError("ell must be in 1..10")
    if not 0 < nu <= ell:
        raise DomainError(f"nu must lie in (0, {ell}]")
    return float(math.fsum(_h_terms(ell, nu)))


@dataclass(frozen=True)
class ScanReport:
    ell: int
    M: float
    min_abs: float
    argmin: float
    points: int
    passed: bool


def h_ell_nonzero_scan(ell: int, M: float, step: float = 1e-3) -> ScanReport:
    """Check H_ell != 0 on the grid step, 2*step, ..., M.

    A grid value is treated as zero when it is within rounding noise of the
    summed term magnitudes, and a sign change inside one open unit interval
    also counts as a zero.  Integers are sign-change boundaries because the
    irregular term switches branch there.
    """
    if not 0 < M < ell:
        raise DomainError("need 0 < M < ell")
    k = int(round(M / step))
    nus = np.arange(1, k + 1) * step
    table = _h_term_table(ell, nus)
    vals = np.array([math.fsum(row) for row in table])
    floor = 64 * np.finfo(float).eps * np.abs(table).sum(axis=1)
    absval = np.abs(vals)
    problem = absval <= floor
    whole = np.floor(nus + INTEGER_TOL)
    on_int = np.array([is_integer(v) for v in nus])
    same_cell = (whole[1:] == whole[:-1]) & ~on_int[1:] & ~on_int[:-1]
    flips = same_cell & (np.sign(vals[1:]) != np.sign(vals[:-1]))
    j = int(np.argmin(absval))
    report = ScanReport(ell, M, float(absval[j]), float(nus[j]), len(nus),
                        not (problem.any() or flips.any()))
    if not report.passed:
        raise ConfigurationError(f"H_{ell} vanishes on (0, {M}]; this (ell, M) is unusable")
    return report


def j_integrand(jac, ell: int, nu: float):
    """Lattice leading-term integrand at one or many points.

    ``jac[j][0]`` and ``jac[j][1]`` are the u- and v-derivatives of the j-th
    coordinate of the map; trailing axes broadcast.
    """
    if ell not in (1, 2):
        raise DomainError("ell must be 1 or 2")
    J = np.asarray(jac, dtype=float)
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    if np.any(det == 0):
        raise DomainError("map has a singular Jacobian")
    c = 2 - ell                      # zero-based index of the complementary coordinate
    pre = (J[c, 1] - J[c, 0]) ** 2 / det ** 2
    du, dv = J[:, 0], J[:, 1]

    def G(vec):
        return g_nu(np.hypot(vec[0], vec[1]), nu)

    out = pre * (-2 * G(dv) - 2 * G(du) + G(du + dv) + G(dv - du))
    return out if np.ndim(out) else float(out)
