"""Divided-difference weights and higher-order quadratic variations.

Three weight families are provided:

* line: ``a`` weights from the site positions ``t``;
* curve: ``b`` weights from chord distances measured from the base point;
* lattice: four-point ``c`` weights from local 2x2 frames of a deformed grid.

Indices in the public per-row functions are 1-based to match the usual
notation; the vectorised stencil tables are 0-based.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .designs import CurveDesign, LatticeDesign, LineTransect
from .errors import DegenerateCellError, DesignError, DomainError

MAX_ELL = 10
_FLOOR_ULPS = 64


@dataclass(frozen=True)
class CoefficientRow:
    theta: int
    ell: int
    base_index: int
    weights: tuple
    nodes: tuple


@dataclass(frozen=True)
class VariationStatistic:
    """``noise_floor`` is the size rounding alone can produce; values below it are zero."""

    theta: int
    ell: int
    value: float
    term_count: int
    family: str = "line"
    noise_floor: float = 0.0


@dataclass(frozen=True)
class Stencil:
    """Rows of weights and the observation indices they act on."""

    index: np.ndarray      # (m, k) integer indices into the flat observation vector
    weights: np.ndarray    # (m, k)
    nodes: np.ndarray      # (m, k) or (m, k, 2): coordinates entering the weights

    def apply(self, obs: np.ndarray) -> np.ndarray:
        return (self.weights * obs[self.index]).sum(axis=1)

    def statistic(self, obs: np.ndarray, theta: int, ell: int, family: str) -> "VariationStatistic":
        terms = self.weights * obs[self.index]
        inc = terms.sum(axis=1)
        floor = np.sum((_FLOOR_ULPS * np.finfo(float).eps * np.abs(terms).sum(axis=1)) ** 2)
        return VariationStatistic(theta, ell, float(np.sum(inc * inc)), len(inc), family, float(floor))


def _check_order(theta: int, ell: int, n: int, max_ell: int = MAX_ELL):
    if theta not in (1, 2):
        raise DomainError(f"theta must be 1 or 2, got {theta}")
    if not 1 <= ell <= max_ell:
        raise DomainError(f"ell must be in 1..{max_ell}, got {ell}")
    if theta * ell > n - 1:
        raise DomainError(f"ell={ell} with theta={theta} needs more than {n} sites")


def divided_difference_weights(nodes: np.ndarray, scale: float) -> np.ndarray:
    """Weights ``scale / prod_{j != k}(s_k - s_j)`` row-wise, via log magnitudes."""
    m, k1 = nodes.shape
    diff = nodes[:, :, None] - nodes[:, None, :]
    off = ~np.eye(k1, dtype=bool)
    d = diff[:, off].reshape(m, k1, k1 - 1)
    if np.any(d == 0):
        raise DesignError("coincident nodes in a divided difference")
    logmag = math.log(scale) - np.log(np.abs(d)).sum(axis=2)
    sign = np.prod(np.sign(d), axis=2)
    return sign * np.exp(logmag)


def line_stencil(design: LineTransect, theta: int, ell: int) -> Stencil:
    key = ("line", theta, ell)
    if key not in design._cache:
        _check_order(theta, ell, design.n)
        m = design.n - theta * ell
        idx = np.arange(m)[:, None] + theta * np.arange(ell + 1)[None, :]
        nodes = design.sites[idx]
        w = divided_difference_weights(nodes, math.factorial(ell))
        design._cache[key] = Stencil(idx, w, nodes)
    return design._cache[key]


def curve_stencil(design: CurveDesign, theta: int, ell: int) -> Stencil:
    key = ("curve", theta, ell)
    if key not in design._cache:
        _check_order(theta, ell, design.n, max_ell=2)
        m = design.n - theta * ell
        idx = np.arange(m)[:, None] + theta * np.arange(ell + 1)[None, :]
        p = design.points
        nodes = np.hypot(*(p[idx] - p[idx[:, :1]]).transpose(2, 0, 1))
        w = divided_difference_weights(nodes, float(ell))
        design._cache[key] = Stencil(idx, w, nodes)
    return design._cache[key]


def _inv2(M: np.ndarray, what: str) -> np.ndarray:
    a, b, c, d = M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1]
    det = a * d - b * c
    scale = np.max(np.abs(M), axis=(-2, -1))
    bad = ~(np.abs(det) > 1e-14 * scale ** 2)
    if bad.any():
        where = tuple(int(v) + 1 for v in np.argwhere(bad)[0])
        raise DegenerateCellError(f"singular {what} at cell {where}")
    inv = np.empty_like(M)
    inv[..., 0, 0] = d / det
    inv[..., 0, 1] = -b / det
    inv[..., 1, 0] = -c / det
    inv[..., 1, 1] = a / det
    return inv


def lattice_stencil(design: LatticeDesign, theta: int, ell: int) -> Stencil:
    """Weights ordered as corners (0,0), (1,0), (0,1), (1,1) of each cell."""
    key = ("lattice", theta, ell)
    if key not in design._cache:
        if theta not in (1, 2) or ell not in (1, 2):
            raise DomainError("lattice statistics need theta, ell in {1, 2}")
        n = design.n
        m = n - theta
        if m < 1:
            raise DomainError("lattice too small for this theta")
        x = design.points
        x00 = x[:m, :m]
        x10 = x[theta:, :m]
        x01 = x[:m, theta:]
        x11 = x[theta:, theta:]
        A = np.stack([x10 - x00, x01 - x00], axis=-2)
        B = np.stack([x10 - x11, x01 - x11], axis=-2)
        alpha = _inv2(A, "frame A")[..., ell - 1, :]
        beta = _inv2(B, "frame B")[..., ell - 1, :]
        w = np.stack([
            alpha[..., 0] + alpha[..., 1],
            beta[..., 0] - alpha[..., 0],
            beta[..., 1] - alpha[..., 1],
            -beta[..., 0] - beta[..., 1],
        ], axis=-1).reshape(m * m, 4)
        i1, i2 = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        corners = [(0, 0), (theta, 0), (0, theta), (theta, theta)]
        idx = np.stack([(i1 + a) * n + (i2 + b) for a, b in corners], axis=-1).reshape(m * m, 4)
        nodes = x.reshape(-1, 2)[idx]
        design._cache[key] = Stencil(idx, w, nodes)
    return design._cache[key]


def _row_check(i: int, count: int):
    if not 1 <= i <= count:
        raise DomainError(f"base index {i} outside 1..{count}")


def a_coefficients(design: LineTransect, theta: int, ell: int, i: int) -> CoefficientRow:
    st = line_stencil(design, theta, ell)
    _row_check(i, len(st.weights))
    return CoefficientRow(theta, ell, i, tuple(st.weights[i - 1].tolist()), tuple(st.nodes[i - 1].tolist()))


def b_coefficients(design: CurveDesign, theta: int, ell: int, i: int) -> CoefficientRow:
    st = curve_stencil(design, theta, ell)
    _row_check(i, len(st.weights))
    return CoefficientRow(theta, ell, i, tuple(st.weights[i - 1].tolist()), tuple(st.nodes[i - 1].tolist()))


def c_coefficients(design: LatticeDesign, theta: int, ell: int, i1: int, i2: int) -> CoefficientRow:
    st = lattice_stencil(design, theta, ell)
    m = design.n - theta
    _row_check(i1, m)
    _row_check(i2, m)
    r = (i1 - 1) * m + (i2 - 1)
    return CoefficientRow(theta, ell, (i1, i2), tuple(st.weights[r].tolist()),
                          tuple(map(tuple, st.nodes[r].tolist())))


def _as_obs(obs, n: int) -> np.ndarray:
    x = np.asarray(obs, dtype=float).ravel()
    if len(x) != n:
        raise DesignError(f"expected {n} observations, got {len(x)}")
    return x


def variation_line(obs, design: LineTransect, theta: int, ell: int) -> VariationStatistic:
    st = line_stencil(design, theta, ell)
    return st.statistic(_as_obs(obs, design.n), theta, ell, "line")


def variation_curve(obs, design: CurveDesign, theta: int, ell: int) -> VariationStatistic:
    st = curve_stencil(design, theta, ell)
    return st.statistic(_as_obs(obs, design.n), theta, ell, "curve")


def variation_lattice(obs, design: LatticeDesign, theta: int, ell: int) -> VariationStatistic:
    st = lattice_stencil(design, theta, ell)
    return st.statistic(_as_obs(obs, design.n ** 2), theta, ell, "lattice")
