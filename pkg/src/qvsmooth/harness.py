"""Experiment runner and file-based estimation."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import designs as D
from .covariance import CovarianceModel
from .errors import ConfigurationError, DesignError, IllConditionedCovarianceError, QVError
from .estimators import (EstimateResult, estimate_curve, estimate_lattice,
                         estimate_line_adaptive, estimate_line_fixed_ell, naive_log_estimate)
from .grf import factor, sample
from .qvar import variation_lattice

THREADS_ENV = "QVSMOOTH_THREADS"
CSV_COLUMNS = ("nu_true", "replication", "variant", "nu_hat", "objective", "status", "seconds")

_DEFAULT_N = {1: 200, 2: 200, 3: 40}
_MODE = {1: "line", 2: "curve", 3: "lattice"}
_PRIMARY = {"line": "aFinal", "curve": "bFinal", "lattice": "c2"}
_MAX_N = {"line": 5000, "curve": 5000, "lattice": 70}


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            val = int(raw)
        except ValueError as exc:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer") from exc
        if val < 1:
            raise ConfigurationError(f"{THREADS_ENV} must be >= 1")
        return val
    return os.cpu_count() or 1


@dataclass
class ExperimentConfig:
    experiment: object = 1                 # 1, 2, 3 or "custom"
    n: int | None = None
    nu_list: list = field(default_factory=lambda: [0.5])
    replications: int = 20
    seed: int = 0
    M: float = 2.5
    output_path: str | None = None
    format: str = "csv"
    mode: str | None = None                # custom only: line | curve | lattice
    map: str | None = None                 # custom only, see DESIGN_MAPS
    timings: bool = False

    def __post_init__(self):
        if self.experiment not in (1, 2, 3, "custom"):
            raise ConfigurationError(f"experiment must be 1, 2, 3 or 'custom', got {self.experiment!r}")
        if self.experiment == "custom":
            if self.mode not in ("line", "curve", "lattice"):
                raise ConfigurationError("custom experiments need mode line|curve|lattice")
            if self.n is None:
                raise ConfigurationError("custom experiments need n")
        else:
            self.mode = _MODE[self.experiment]
            if self.n is None:
                self.n = _DEFAULT_N[self.experiment]
        if self.map is None:
            self.map = {"line": "exp1", "curve": "exp2", "lattice": "exp3"}[self.mode]
        if (self.mode, self.map) not in DESIGN_MAPS:
            raise ConfigurationError(f"unknown map {self.map!r} for mode {self.mode}")
        if self.replications < 1:
            raise ConfigurationError("replications must be >= 1")
        if not isinstance(self.n, int) or not 9 <= self.n <= _MAX_N[self.mode]:
            raise ConfigurationError(f"n={self.n} outside the feasible range for {self.mode}")
        if self.format not in ("csv", "json"):
            raise ConfigurationError("format must be csv or json")
        if not self.nu_list or any(not (isinstance(v, (int, float)) and v > 0) for v in self.nu_list):
            raise ConfigurationError("nu_list must hold positive numbers")
        if self.mode == "line" and not self.M > 0:
            raise ConfigurationError("M must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigurationError("config must be a JSON object")
        return cls.from_dict(doc)


DESIGN_MAPS = {
    ("line", "identity"): lambda n: D.line_sites(lambda s: s, n),
    ("line", "exp1"): lambda n: D.line_sites(D.exp1_phi, n),
    ("curve", "exp2"): lambda n: D.curve_sites(D.exp2_gamma, D.exp2_phi, D.EXP2_L, n),
    ("curve", "line"): lambda n: D.curve_sites(lambda t: (t, 0.0), lambda s: s, 1.0, n),
    ("lattice", "identity"): lambda n: D.lattice_sites(D.identity_map, n),
    ("lattice", "exp3"): lambda n: D.lattice_sites(D.exp3_map, n),
}


def build_design(mode: str, map_name: str, n: int):
    try:
        return DESIGN_MAPS[(mode, map_name)](n)
    except KeyError:
        raise ConfigurationError(f"unknown map {map_name!r} for mode {mode}") from None


def estimate_all(obs, design, mode: str, M: float = 2.5) -> dict:
    """Every estimator variant reported for a mode, keyed by variant name."""
    if mode == "line":
        r = estimate_line_adaptive(obs, design, M)
        return {"a0": (r.interval_estimate, None), "aFinal": (r.nu_hat, r.objective)}
    if mode == "curve":
        r = estimate_curve(obs, design)
        out = {k: (v, None) for k, v in r.components.items() if k != "bFinal"}
        out["bFinal"] = (r.nu_hat, r.objective)
        return out
    out = {}
    for ell in (1, 2):
        r = estimate_lattice(obs, design, ell)
        out[f"c{ell}"] = (r.nu_hat, r.objective)
    out["naive"] = (naive_log_estimate(variation_lattice(obs, design, 1, 2), design.n), None)
    return out


@dataclass
class Record:
    nu_true: float
    replication: int
    variant: str
    nu_hat: float | None
    objective: float | None
    status: str
    seconds: float


@dataclass
class Summary:
    nu_true: float
    variant: str
    mae: float | None
    se: float | None
    successes: int
    failures: int


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: list
    summaries: list
    primary_variant: str
    wall_seconds: float

    def summary(self, nu: float, variant: str | None = None) -> Summary:
        variant = variant or self.primary_variant
        for s in self.summaries:
            if s.nu_true == nu and s.variant == variant:
                return s
        raise KeyError((nu, variant))

    @property
    def all_failed(self) -> list:
        return [s.nu_true for s in self.summaries
                if s.variant == self.primary_variant and s.successes == 0]

    def _seconds(self, r: Record):
        return f"{r.seconds:.6f}" if self.config.timings else ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow([repr(r.nu_true), r.replication, r.variant,
                        "" if r.nu_hat is None else repr(r.nu_hat),
                        "" if r.objective is None else repr(r.objective),
                        r.status, self._seconds(r)])
        return buf.getvalue()

    def summary_dict(self) -> dict:
        return {
            "experiment": self.config.experiment,
            "mode": self.config.mode,
            "n": self.config.n,
            "replications": self.config.replications,
            "seed": self.config.seed,
            "primary_variant": self.primary_variant,
            "summaries": [asdict(s) for s in self.summaries],
        }

    def to_json(self) -> str:
        doc = self.summary_dict()
        doc["config"] = asdict(self.config)
        recs = []
        for r in self.records:
            d = asdict(r)
            if not self.config.timings:
                d["seconds"] = None
            recs.append(d)
        doc["records"] = recs
        if self.config.timings:
            doc["wall_seconds"] = self.wall_seconds
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def write(self, path=None) -> list:
        path = Path(path or self.config.output_path)
        written = [path]
        if self.config.format == "csv":
            path.write_text(self.to_csv())
            side = path.with_suffix(".summary.json")
            side.write_text(json.dumps(self.summary_dict(), indent=2, sort_keys=True) + "\n")
            written.append(side)
        else:
            path.write_text(self.to_json())
        return written


def _summarise(records: list, nus: list) -> list:
    out = []
    variants = list(dict.fromkeys(r.variant for r in records))
    for nu in nus:
        for v in variants:
            rs = [r for r in records if r.nu_true == nu and r.variant == v]
            if not rs:
                continue
            ok = [abs(r.nu_hat - nu) for r in rs if r.status == "ok"]
            k = len(ok)
            mae = float(np.mean(ok)) if k else None
            se = float(np.std(ok, ddof=1) / math.sqrt(k)) if k > 1 else None
            out.append(Summary(nu, v, mae, se, k, len(rs) - k))
    return out


def _variant_names(mode: str) -> list:
    return {"line": ["a0", "aFinal"], "curve": ["b2", "bFinal"],
            "lattice": ["c1", "c2", "naive"]}[mode]


def run_experiment(config: ExperimentConfig, threads: int | None = None) -> ExperimentReport:
    t_start = time.perf_counter()
    design = build_design(config.mode, config.map, config.n)
    sites = design.site_set()
    workers = threads or thread_count()
    records: list = []
    for nu in config.nu_list:
        nu = float(nu)
        try:
            state = factor(CovarianceModel(nu), sites, master_seed=config.seed)
        except IllConditionedCovarianceError:
            for rep in range(config.replications):
                for v in _variant_names(config.mode):
                    records.append(Record(nu, rep, v, None, None, "ill_conditioned", 0.0))
            continue

        def one(rep: int, state=state, nu=nu):
            t0 = time.perf_counter()
            try:
                x = sample(state, rep)
                est = estimate_all(x, design, config.mode, config.M)
                status = "ok"
            except QVError as exc:
                est, status = {}, type(exc).__name__
            dt = time.perf_counter() - t0
            if not est:
                return [Record(nu, rep, v, None, None, status, dt)
                        for v in _variant_names(config.mode)]
            return [Record(nu, rep, v, val, ob, status, dt) for v, (val, ob) in est.items()]

        with ThreadPoolExecutor(max_workers=workers) as pool:
            for recs in pool.map(one, range(config.replications)):
                records.extend(recs)
    return ExperimentReport(config, records, _summarise(records, [float(v) for v in config.nu_list]),
                            _PRIMARY[config.mode], time.perf_counter() - t_start)


def read_observations(path) -> np.ndarray:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DesignError(f"cannot read observation file {path}: {exc}") from exc
    if isinstance(doc, dict):
        doc = doc.get("observations")
    try:
        x = np.asarray(doc, dtype=float)
    except (TypeError, ValueError) as exc:
        raise DesignError(f"observations must be a list of numbers: {exc}") from exc
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise DesignError("observations must be a flat list of finite numbers")
    return x


def write_observations(path, obs) -> None:
    Path(path).write_text(json.dumps([float(v) for v in np.asarray(obs).ravel()]))


def load_problem(sites_path, obs_path, mode: str):
    """Parse files into (observations, design) ready for the estimators."""
    pts, ordered = D.read_sites(sites_path)
    x = read_observations(obs_path)
    m = len(pts)
    if mode == "lattice":
        if pts.shape[1] != 2:
            raise DesignError("lattice mode needs 2-D sites")
        n = math.isqrt(m)
        if n * n != m:
            raise DesignError(f"lattice needs a square number of sites, got {m}")
        if len(x) != m:
            raise DesignError(f"expected n^2 = {m} observations, got {len(x)}")
        return x, D.LatticeDesign(pts.reshape(n, n, 2))
    if len(x) != m:
        raise DesignError(f"expected {m} observations, got {len(x)}")
    if mode == "line":
        if pts.shape[1] != 1:
            raise DesignError("line mode needs 1-D sites")
        t = pts[:, 0]
        order = np.argsort(t, kind="stable")
        if ordered and np.any(order != np.arange(m)):
            raise DesignError("sites are marked ordered but are not increasing")
        return x[order], D.LineTransect(t[order])
    if mode == "curve":
        if pts.shape[1] != 2:
            raise DesignError("curve mode needs 2-D sites")
        if not ordered:
            perm = D.recover_order(pts)
            pts, x = pts[perm], x[perm]
        return x, D.CurveDesign(pts)
    raise ConfigurationError(f"unknown mode {mode!r}")


def estimate_from_files(sites_path, obs_path, mode: str, M: float = 2.5,
                        ell: int | None = None) -> EstimateResult:
    x, design = load_problem(sites_path, obs_path, mode)
    if mode == "line":
        if ell is None:
            return estimate_line_adaptive(x, design, M)
        return estimate_line_fixed_ell(x, design, ell, M)
    if mode == "curve":
        return estimate_curve(x, design)
    return estimate_lattice(x, design, 2 if ell is None else ell)
