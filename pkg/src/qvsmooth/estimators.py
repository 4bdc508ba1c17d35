"""Smoothness estimators built on the ratio-matching objective.

Each estimator picks nu in a closed interval so that V1 * F(nu) / V2 is as
close to one as possible.  The minimiser is a grid scan followed by a
golden-section polish inside the winning grid bracket.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .designs import CurveDesign, LatticeDesign, LineTransect, canonical_orientation
from .errors import DegenerateDataError, DomainError
from .qvar import VariationStatistic, variation_curve, variation_lattice, variation_line
from .targets import grid_nodes, ratio_function

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SearchConfig:
    """Grid spacing of the global scan and width at which refinement stops."""

    grid_step: float = 1e-3
    refine_tolerance: float = 1e-6

    def __post_init__(self):
        if not self.grid_step > self.refine_tolerance > 0:
            raise DomainError("need grid_step > refine_tolerance > 0")


DEFAULT_CONFIG = SearchConfig()


@dataclass
class EstimateResult:
    nu_hat: float
    objective: float
    ell_used: int | None
    variant: str
    domain: tuple
    interval_estimate: float | None = None
    components: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["domain"] = list(self.domain)
        return d


def _grid(F, lo: float, hi: float, step: float):
    cached = getattr(F, "grid", None)
    if cached is not None and lo == 0 and hi == getattr(F, "upper", None):
        return cached(step)
    nodes = grid_nodes(lo, hi, step)
    try:
        vals = np.asarray(F(nodes), dtype=float)
    except TypeError:
        vals = np.array([F(float(v)) for v in nodes])
    return nodes, vals


def minimize_ratio(v1: float, v2: float, F, domain, config: SearchConfig = DEFAULT_CONFIG):
    """Minimise (v1 F(nu) / v2 - 1)^2 over ``domain``; returns (nu_hat, objective)."""
    if not (v1 > 0 and v2 > 0):
        raise DegenerateDataError(f"variations must be positive (got {v1}, {v2})")
    lo, hi = map(float, domain)
    if not hi > lo:
        raise DomainError("empty search domain")
    r = v1 / v2

    def obj(nu: float) -> float:
        return (r * float(F(nu)) - 1.0) ** 2

    nodes, vals = _grid(F, lo, hi, config.grid_step)
    if not np.all(np.isfinite(vals)):
        raise ArithmeticError("ratio function returned non-finite values")
    objs = (r * vals - 1.0) ** 2
    k = int(np.argmin(objs))                    # first minimiser = smallest nu
    best_nu, best_obj = float(nodes[k]), float(objs[k])
    a = float(nodes[max(k - 1, 0)])
    b = float(nodes[min(k + 1, len(nodes) - 1)])

    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = obj(c), obj(d)
    while b - a > config.refine_tolerance:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = obj(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = obj(d)
    x = 0.5 * (a + b)
    fx = obj(x)
    if fx < best_obj or (fx == best_obj and x < best_nu):
        best_nu, best_obj = x, fx
    return best_nu, best_obj


def _ratio_or_fail(v1: VariationStatistic, v2: VariationStatistic):
    if v1.value <= v1.noise_floor or v2.value <= v2.noise_floor:
        raise DegenerateDataError("zero variation: observations carry no roughness signal")
    return v1.value, v2.value


def estimate_line_fixed_ell(obs, design: LineTransect, ell: int, M: float,
                            config: SearchConfig = DEFAULT_CONFIG) -> EstimateResult:
    if not 0 < M < ell:
        raise DomainError(f"need 0 < M < ell (M={M}, ell={ell})")
    return _line_at(obs, design, ell, M, config, variant="a")


def _line_at(obs, design, ell, upper, config, variant):
    if design.n < 2 * 2 * ell + 2:
        raise DomainError(f"n={design.n} too small for ell={ell}")
    v1, v2 = _ratio_or_fail(variation_line(obs, design, 1, ell),
                            variation_line(obs, design, 2, ell))
    F = ratio_function("line", design, ell, upper)
    nu, ob = minimize_ratio(v1, v2, F, (0.0, F.upper), config)
    return EstimateResult(nu, ob, ell, variant, (0.0, F.upper))


def estimate_line_adaptive(obs, design: LineTransect, M: float,
                           config: SearchConfig = DEFAULT_CONFIG) -> EstimateResult:
    """Order selection by agreement of consecutive fixed-order estimates."""
    if M <= 0:
        raise DomainError("M must be positive")
    top = math.floor(M) + 2
    fits = [_line_at(obs, design, l, min(M, float(l)), config, variant=f"a{l}")
            for l in range(1, top + 1)]
    nus = [f.nu_hat for f in fits]
    gaps = [(nus[j] - nus[j + 1]) ** 2 for j in range(top - 1)]
    j0 = int(np.argmin(gaps))
    nu0 = nus[j0]
    l_star = math.floor(nu0 + 0.25) + 1
    chosen = fits[l_star - 1]
    comps = {f"a_ell{l}": nus[l - 1] for l in range(1, top + 1)}
    comps["a0"] = nu0
    comps["aFinal"] = chosen.nu_hat
    return EstimateResult(chosen.nu_hat, chosen.objective, l_star, "aFinal",
                          (0.0, float(M)), interval_estimate=nu0, components=comps)


def _oriented(obs, design: CurveDesign):
    """Fix the traversal direction so the result does not depend on it."""
    x = np.asarray(obs, dtype=float).ravel()
    if canonical_orientation(design.points):
        rev = design._cache.get("reversed")
        if rev is None:
            rev = design._cache["reversed"] = design.reversed()
        return x[::-1].copy(), rev
    return x, design


def _curve_at(x, design, ell, config):
    v1, v2 = _ratio_or_fail(variation_curve(x, design, 1, ell),
                            variation_curve(x, design, 2, ell))
    F = ratio_function("curve", design, ell)
    nu, ob = minimize_ratio(v1, v2, F, (0.0, F.upper), config)
    return EstimateResult(nu, ob, ell, f"b{ell}", (0.0, F.upper))


def estimate_curve(obs, design: CurveDesign, config: SearchConfig = DEFAULT_CONFIG) -> EstimateResult:
    if design.n < 9:
        raise DomainError("curve estimation needs n >= 9")
    x, des = _oriented(obs, design)
    r2 = _curve_at(x, des, 2, config)
    comps = {"b2": r2.nu_hat}
    if r2.nu_hat > 0.75:
        final = r2
    else:
        final = _curve_at(x, des, 1, config)
        comps["b1"] = final.nu_hat
    comps["bFinal"] = final.nu_hat
    return EstimateResult(final.nu_hat, final.objective, final.ell_used, "bFinal",
                          final.domain, components=comps)


def estimate_lattice(obs, design: LatticeDesign, ell: int,
                     config: SearchConfig = DEFAULT_CONFIG) -> EstimateResult:
    if design.n < 5:
        raise DomainError("lattice estimation needs n >= 5")
    v1, v2 = _ratio_or_fail(variation_lattice(obs, design, 1, ell),
                            variation_lattice(obs, design, 2, ell))
    F = ratio_function("lattice", design, ell)
    nu, ob = minimize_ratio(v1, v2, F, (0.0, 2.0), config)
    return EstimateResult(nu, ob, ell, f"c{ell}", (0.0, 2.0), components={f"c{ell}": nu})


def naive_log_estimate(vbar: VariationStatistic, n: int) -> float:
    """(4 - log V / log n) / 2; biased by order 1/log n."""
    value = vbar.value if isinstance(vbar, VariationStatistic) else float(vbar)
    if not value > 0:
        raise DegenerateDataError("zero variation")
    if n < 2:
        raise DomainError("need n >= 2")
    return (4.0 - math.log(value) / math.log(n)) / 2.0
