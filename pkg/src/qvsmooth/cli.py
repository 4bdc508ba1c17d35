"""Command-line entry point: ``qvsmooth simulate | estimate | experiment``."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import designs as D
from .covariance import CovarianceModel
from .errors import (ConfigurationError, DegenerateDataError, DesignError, DomainError,
                     IllConditionedCovarianceError, QVError)
from .grf import factor, sample
from .harness import (ExperimentConfig, build_design, estimate_from_files, run_experiment,
                      write_observations)

EXIT_OK, EXIT_ESTIMATION, EXIT_INPUT = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qvsmooth", description="Smoothness estimation by quadratic variations.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a design and one simulated field")
    s.add_argument("--experiment", type=int, choices=(1, 2, 3))
    s.add_argument("--mode", choices=("line", "curve", "lattice"))
    s.add_argument("--map", dest="map_name")
    s.add_argument("--n", type=int)
    s.add_argument("--nu", type=float, required=True)
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--index", type=int, default=0, help="replication index")
    s.add_argument("--shuffle", action="store_true", help="write sites unordered (curve mode)")
    s.add_argument("--sites", required=True)
    s.add_argument("--obs", required=True)

    e = sub.add_parser("estimate", help="estimate nu from site and observation files")
    e.add_argument("--sites", required=True)
    e.add_argument("--obs", required=True)
    e.add_argument("--mode", choices=("line", "curve", "lattice"), required=True)
    e.add_argument("--M", type=float, default=2.5)
    e.add_argument("--ell", type=int)

    x = sub.add_parser("experiment", help="run a simulation study")
    x.add_argument("--config", help="JSON file mirroring ExperimentConfig")
    x.add_argument("--experiment", type=int, choices=(1, 2, 3))
    x.add_argument("--nu", type=float, nargs="+")
    x.add_argument("--n", type=int)
    x.add_argument("--replications", type=int)
    x.add_argument("--seed", type=int)
    x.add_argument("--output")
    x.add_argument("--format", choices=("csv", "json"))
    return p


def _simulate(a) -> int:
    if a.experiment:
        cfg = ExperimentConfig(experiment=a.experiment, n=a.n)
    else:
        if not a.mode or not a.n:
            raise ConfigurationError("give --experiment, or --mode and --n")
        cfg = ExperimentConfig(experiment="custom", mode=a.mode, map=a.map_name, n=a.n)
    design = build_design(cfg.mode, cfg.map, cfg.n)
    state = factor(CovarianceModel(a.nu, a.alpha, a.sigma), design.site_set(), master_seed=a.seed)
    x = sample(state, a.index)
    pts = D.design_points(design)
    ordered = True
    if a.shuffle:
        if cfg.mode != "curve":
            raise ConfigurationError("--shuffle only applies to curve designs")
        perm = np.random.Generator(np.random.Philox(key=[a.seed, a.index + 1])).permutation(len(pts))
        pts, x, ordered = pts[perm], x[perm], False
    with open(a.sites, "w") as fh:
        json.dump(D.sites_to_json(pts, ordered), fh)
    write_observations(a.obs, x)
    print(json.dumps({"sites": a.sites, "obs": a.obs, "n_sites": len(pts),
                      "jitter": state.jitter_used}))
    return EXIT_OK


def _estimate(a) -> int:
    res = estimate_from_files(a.sites, a.obs, a.mode, M=a.M, ell=a.ell)
    print(json.dumps(res.to_dict(), sort_keys=True))
    return EXIT_OK


def _experiment(a) -> int:
    if a.config:
        cfg = ExperimentConfig.from_file(a.config)
        doc = vars(cfg).copy()
    else:
        doc = {}
    overrides = {"experiment": a.experiment, "nu_list": a.nu, "n": a.n,
                 "replications": a.replications, "seed": a.seed,
                 "output_path": a.output, "format": a.format}
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if not doc:
        raise ConfigurationError("give --config or --experiment")
    cfg = ExperimentConfig.from_dict(doc)
    report = run_experiment(cfg)
    if cfg.output_path:
        report.write()
    print(json.dumps(report.summary_dict(), indent=2, sort_keys=True))
    return EXIT_ESTIMATION if report.all_failed else EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"simulate": _simulate, "estimate": _estimate, "experiment": _experiment}[args.command]
    try:
        return handler(args)
    except (DegenerateDataError, IllConditionedCovarianceError, ArithmeticError) as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except (DesignError, DomainError, ConfigurationError, QVError, OSError, TypeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
