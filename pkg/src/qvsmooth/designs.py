"""Sampling designs: line transects, planar curves and deformed lattices."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .covariance import SiteSet, pairwise_distances
from .errors import DesignError, OrderingAmbiguousError

CHORD_REACH = 4
MIN_SLOPE = 1e-3


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class LineTransect:
    sites: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        t = _frozen(self.sites)
        if t.ndim != 1 or len(t) < 2:
            raise DesignError("a line transect needs at least 2 sites")
        if not np.all(np.diff(t) > 0):
            raise DesignError("line sites must be strictly increasing")
        object.__setattr__(self, "sites", t)

    @property
    def n(self) -> int:
        return len(self.sites)

    @property
    def points(self) -> np.ndarray:
        return self.sites[:, None]

    def site_set(self) -> SiteSet:
        return SiteSet(self.points)


@dataclass(frozen=True, eq=False)
class CurveDesign:
    """Ordered points on a planar curve.

    ``chords[i, k]`` holds the distance from point ``i`` to point ``i + k``
    for ``k = 0..4`` (NaN past the end).
    """

    points: np.ndarray
    chords: np.ndarray = field(init=False, repr=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise DesignError("a curve design needs at least 2 planar points")
        n = len(pts)
        ch = np.full((n, CHORD_REACH + 1), np.nan)
        ch[:, 0] = 0.0
        for k in range(1, CHORD_REACH + 1):
            if k < n:
                ch[: n - k, k] = np.hypot(*(pts[k:] - pts[:-k]).T)
        if np.nanmin(ch[:, 1:]) <= 0:
            raise DesignError("coincident points on the curve")
        ch.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "chords", ch)

    @property
    def n(self) -> int:
        return len(self.points)

    def chord(self, i: int, j: int) -> float:
        """Chord distance between points i and j (0-based)."""
        lo, hi = min(i, j), max(i, j)
        if hi - lo <= CHORD_REACH:
            return float(self.chords[lo, hi - lo])
        return float(np.hypot(*(self.points[hi] - self.points[lo])))

    def reversed(self) -> "CurveDesign":
        return CurveDesign(self.points[::-1])

    def site_set(self) -> SiteSet:
        return SiteSet(self.points)


@dataclass(frozen=True, eq=False)
class LatticeDesign:
    """``points[i1 - 1, i2 - 1]`` is the image of ``(i1/n, i2/n)``."""

    points: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 3 or pts.shape[0] != pts.shape[1] or pts.shape[2] != 2:
            raise DesignError("lattice points must have shape (n, n, 2)")
        flat = pts.reshape(-1, 2)
        if len(np.unique(flat, axis=0)) != len(flat):
            raise DesignError("lattice map is not injective on the grid")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def site_set(self) -> SiteSet:
        return SiteSet(self.points.reshape(-1, 2))


def line_sites(phi: Callable, n: int) -> LineTransect:
    """Sites t_i = phi((i-1)/(n-1)), with phi validated on a 10n grid."""
    if n < 2:
        raise DesignError("need n >= 2")
    grid = np.linspace(0.0, 1.0, 10 * n + 1)
    vals = np.array([phi(s) for s in grid], dtype=float)
    if abs(vals[0]) > 1e-12 or abs(vals[-1] - 1) > 1e-12:
        raise DesignError("phi must map 0 to 0 and 1 to 1")
    slopes = np.diff(vals) / np.diff(grid)
    # secants hide a vanishing derivative, so also probe phi' at each node
    h = 1e-7
    fwd = np.array([phi(s + h) for s in grid[:-1]], dtype=float) - vals[:-1]
    slopes = np.minimum(slopes, fwd / h)
    slopes = np.append(slopes, (vals[-1] - phi(1.0 - h)) / h)
    if slopes.min() < MIN_SLOPE:
        raise DesignError(
            f"phi is not uniformly increasing (min slope {slopes.min():.3g} on the grid)")
    s = np.arange(n) / (n - 1)
    t = np.array([phi(v) for v in s], dtype=float)
    t[0], t[-1] = 0.0, 1.0
    return LineTransect(t)


def curve_sites(gamma: Callable, phi: Callable, L: float, n: int) -> CurveDesign:
    """Points gamma(phi(L (i-1)/(n-1))) along an arc-length parametrised curve."""
    if L <= 0:
        raise DesignError("L must be positive")
    grid = np.linspace(0.0, L, 10 * n + 1)
    vals = np.array([phi(s) for s in grid], dtype=float)
    if abs(vals[0]) > 1e-12 or abs(vals[-1] - L) > 1e-12 * max(1.0, L):
        raise DesignError("phi must map 0 to 0 and L to L")
    if np.min(np.diff(vals)) <= 0:
        raise DesignError("phi must be strictly increasing")
    t = np.array([phi(L * i / (n - 1)) for i in range(n)], dtype=float)
    pts = np.array([gamma(v) for v in t], dtype=float)
    d = pairwise_distances(pts)
    np.fill_diagonal(d, np.inf)
    if d.min() <= 0:
        raise DesignError("curve passes through the same point twice")
    return CurveDesign(pts)


def lattice_sites(phi_tilde: Callable, n: int) -> LatticeDesign:
    """Points phi_tilde(i1/n, i2/n) for 1 <= i1, i2 <= n.

    ``phi_tilde`` takes two arrays ``(u, v)`` and returns ``(x1, x2)``.
    """
    if n < 2:
        raise DesignError("need n >= 2")
    idx = np.arange(1, n + 1) / n
    u, v = np.meshgrid(idx, idx, indexing="ij")
    x1, x2 = phi_tilde(u, v)
    pts = np.stack([np.broadcast_to(x1, u.shape), np.broadcast_to(x2, u.shape)], axis=-1)
    return LatticeDesign(pts)


def recover_order(points, ratio: float = 3.0) -> np.ndarray:
    """Order unlabelled curve points by two-ended nearest-neighbour growth.

    Returns a permutation ``perm`` such that ``points[perm]`` follows the
    curve (in one of its two directions).
    """
    pts = np.asarray(points, dtype=float)
    m = len(pts)
    if m < 2:
        return np.arange(m)
    dist = pairwise_distances(pts)
    np.fill_diagonal(dist, np.inf)
    if np.min(dist) <= 0:
        raise DesignError("points are not distinct")
    start = int(np.lexsort(pts.T[::-1])[0])
    used = np.zeros(m, dtype=bool)
    used[start] = True
    left = [start]
    right = [start]
    gaps: list[float] = []
    while not used.all():
        dl = np.where(used, np.inf, dist[left[-1]])
        dr = np.where(used, np.inf, dist[right[-1]])
        jl, jr = int(np.argmin(dl)), int(np.argmin(dr))
        if dl[jl] <= dr[jr]:
            j, gap, side = jl, dl[jl], left
        else:
            j, gap, side = jr, dr[jr], right
        if len(gaps) >= 2 and gap > ratio * float(np.median(gaps)):
            raise OrderingAmbiguousError(
                f"nearest unused point is {gap:.3g} away, over {ratio}x the median gap")
        gaps.append(gap)
        side.append(j)
        used[j] = True
    med = float(np.median(gaps))
    if gaps and max(gaps[:2]) > ratio * med:
        raise OrderingAmbiguousError("an initial step is far longer than the typical gap")
    return np.array(left[:0:-1] + right, dtype=int)


def lattice_subset_curve(design: LatticeDesign) -> CurveDesign:
    """The grid row with median second index, as a curve design."""
    n = design.n
    if n < 5:
        raise DesignError("need n >= 5")
    i2 = (n + 1) // 2
    return CurveDesign(design.points[:, i2 - 1, :])


def canonical_orientation(points: np.ndarray) -> bool:
    """True if the sequence should be reversed so the smaller endpoint comes first."""
    a, b = points[0], points[-1]
    return tuple(b) < tuple(a)


# Maps used by the three experiments.

def exp1_phi(s):
    return s * (s + 1) / 2


def exp2_gamma(t):
    return (math.cos(t), math.sin(t))


EXP2_L = math.pi / 2


def exp2_phi(s):
    return s * (s + 1) / (EXP2_L + 1)


def exp3_map(u, v):
    z = np.asarray(u) + 1j * np.asarray(v)
    w = z * (z + 1) / 3
    return w.real, w.imag


def exp3_jacobian(u, v):
    """2x2 Jacobian [[d1/du, d1/dv], [d2/du, d2/dv]] of the experiment-3 map."""
    dz = (2 * (u + 1j * v) + 1) / 3
    return np.array([[dz.real, -dz.imag], [dz.imag, dz.real]])


def identity_map(u, v):
    return np.asarray(u, dtype=float), np.asarray(v, dtype=float)


# JSON site documents: {"dimension": 1|2, "points": [[...], ...], "ordered": bool}

def sites_to_json(points, ordered: bool = True) -> dict:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return {"dimension": int(pts.shape[1]), "points": pts.tolist(), "ordered": bool(ordered)}


def design_points(design) -> np.ndarray:
    if isinstance(design, LatticeDesign):
        return design.points.reshape(-1, 2)
    return np.asarray(design.points)


def write_sites(path, design, ordered: bool = True) -> None:
    Path(path).write_text(json.dumps(sites_to_json(design_points(design), ordered)))


def read_sites(path) -> tuple[np.ndarray, bool]:
    """Parse a site document; returns (points of shape (m, dim), ordered)."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DesignError(f"cannot read site file {path}: {exc}") from exc
    if not isinstance(doc, dict) or "points" not in doc or "dimension" not in doc:
        raise DesignError("site file needs 'dimension' and 'points'")
    dim = doc["dimension"]
    if dim not in (1, 2):
        raise DesignError(f"dimension must be 1 or 2, got {dim!r}")
    try:
        pts = np.asarray(doc["points"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise DesignError(f"malformed points: {exc}") from exc
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise DesignError(f"points must be a list of {dim}-element coordinates")
    return pts, bool(doc.get("ordered", True))
