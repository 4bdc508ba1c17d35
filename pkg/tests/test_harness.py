import csv
import io
import json

import numpy as np
import pytest

import _oracles as O
import qvsmooth.harness as H
from qvsmooth.designs import write_sites
from qvsmooth.errors import ConfigurationError, DesignError, IllConditionedCovarianceError
from qvsmooth.harness import (CSV_COLUMNS, ExperimentConfig, build_design, estimate_from_files,
                              load_problem, run_experiment, thread_count, write_observations)


@pytest.fixture(scope="module")
def small_run():
    cfg = ExperimentConfig(experiment=1, n=80, nu_list=[0.5, 1.5], replications=4, seed=3)
    return run_experiment(cfg, threads=2)


class TestConfig:
    def test_defaults(self):
        for exp, mode, n in [(1, "line", 200), (2, "curve", 200), (3, "lattice", 40)]:
            cfg = ExperimentConfig(experiment=exp)
            assert cfg.mode == mode and cfg.n == n and cfg.replications == 20

    @pytest.mark.parametrize("kwargs", [
        {"experiment": 4}, {"replications": 0}, {"n": 5}, {"n": 100_000}, {"format": "xml"},
        {"nu_list": []}, {"nu_list": [-0.5]}, {"nu_list": ["a"]}, {"M": 0.0},
        {"experiment": "custom", "n": 50}, {"experiment": "custom", "mode": "line"},
        {"experiment": 3, "n": 200}, {"experiment": 1, "map": "exp3"},
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(**kwargs)

    def test_custom(self):
        cfg = ExperimentConfig(experiment="custom", mode="lattice", map="identity", n=12)
        assert build_design(cfg.mode, cfg.map, cfg.n).n == 12

    def test_from_file(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"experiment": 2, "nu_list": [1.5], "replications": 3}))
        cfg = ExperimentConfig.from_file(p)
        assert cfg.mode == "curve" and cfg.nu_list == [1.5]

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict({"experiment": 1, "reps": 3})

    @pytest.mark.parametrize("text", ["{", "[1, 2]"])
    def test_bad_file(self, tmp_path, text):
        p = tmp_path / "c.json"
        p.write_text(text)
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_file(p)

    def test_thread_env(self, monkeypatch):
        monkeypatch.setenv(H.THREADS_ENV, "3")
        assert thread_count() == 3
        monkeypatch.setenv(H.THREADS_ENV, "zero")
        with pytest.raises(ConfigurationError):
            thread_count()
        monkeypatch.delenv(H.THREADS_ENV)
        assert thread_count() >= 1


class TestRun:
    def test_records(self, small_run):
        assert len(small_run.records) == 2 * 4 * 2
        assert {r.variant for r in small_run.records} == {"a0", "aFinal"}
        assert all(r.status == "ok" for r in small_run.records)
        assert small_run.primary_variant == "aFinal"

    def test_summary_matches_independent_aggregation(self, small_run):
        rows = list(csv.DictReader(io.StringIO(small_run.to_csv())))
        assert tuple(rows[0].keys()) == CSV_COLUMNS
        for nu in (0.5, 1.5):
            errs = [abs(float(r["nu_hat"]) - nu) for r in rows
                    if float(r["nu_true"]) == nu and r["variant"] == "aFinal"]
            mae, se = O.mae_se(errs)
            s = small_run.summary(nu)
            assert s.mae == pytest.approx(mae, rel=1e-12) and s.se == pytest.approx(se, rel=1e-12)
            assert s.successes == 4 and s.failures == 0

    def test_thread_count_does_not_matter(self, small_run):
        other = run_experiment(small_run.config, threads=1)
        assert other.to_csv() == small_run.to_csv()
        assert other.to_json() == small_run.to_json()

    def test_reports_byte_identical(self, small_run, tmp_path):
        again = run_experiment(small_run.config, threads=3)
        a = [p.read_bytes() for p in small_run.write(tmp_path / "a.csv")]
        b = [p.read_bytes() for p in again.write(tmp_path / "b.csv")]
        assert a == b and len(a) == 2

    def test_seconds_blank_unless_requested(self, small_run):
        rows = list(csv.DictReader(io.StringIO(small_run.to_csv())))
        assert all(r["seconds"] == "" for r in rows)
        cfg = ExperimentConfig(experiment=1, n=40, replications=2, timings=True)
        rep = run_experiment(cfg, threads=1)
        rows = list(csv.DictReader(io.StringIO(rep.to_csv())))
        assert all(float(r["seconds"]) > 0 for r in rows)
        assert "wall_seconds" in json.loads(rep.to_json())

    def test_json_report(self, small_run, tmp_path):
        small_run.config.format = "json"
        try:
            (path,) = small_run.write(tmp_path / "r.json")
        finally:
            small_run.config.format = "csv"
        doc = json.loads(path.read_text())
        assert len(doc["records"]) == 16 and doc["primary_variant"] == "aFinal"
        assert {s["variant"] for s in doc["summaries"]} == {"a0", "aFinal"}

    def test_curve_and_lattice_variants(self):
        rep = run_experiment(ExperimentConfig(experiment=2, n=60, replications=2, nu_list=[0.5]), threads=2)
        assert {"b2", "bFinal"} <= {r.variant for r in rep.records}
        rep = run_experiment(ExperimentConfig(experiment=3, n=12, replications=2, nu_list=[1.5]), threads=2)
        assert {r.variant for r in rep.records} == {"c1", "c2", "naive"}
        assert rep.primary_variant == "c2"

    def test_failures_recorded(self, monkeypatch):
        def refuse(*a, **k):
            raise IllConditionedCovarianceError("nope")
        monkeypatch.setattr(H, "factor", refuse)
        rep = run_experiment(ExperimentConfig(experiment=1, n=40, replications=3, nu_list=[0.5]), threads=1)
        assert all(r.status == "ill_conditioned" for r in rep.records)
        s = rep.summary(0.5)
        assert s.successes == 0 and s.failures == 3 and s.mae is None
        assert rep.all_failed == [0.5]


def _problem_files(tmp_path, pts, obs, ordered=True):
    sp, op = tmp_path / "s.json", tmp_path / "o.json"
    sp.write_text(json.dumps({"dimension": pts.shape[1], "points": pts.tolist(), "ordered": ordered}))
    write_observations(op, obs)
    return sp, op


class TestFiles:
    def test_line_roundtrip(self, tmp_path):
        d = build_design("line", "exp1", 50)
        x = np.random.default_rng(1).normal(size=50)
        sp, op = tmp_path / "s.json", tmp_path / "o.json"
        write_sites(sp, d)
        write_observations(op, x)
        got, design = load_problem(sp, op, "line")
        assert np.array_equal(got, x) and np.array_equal(design.sites, d.sites)
        res = estimate_from_files(sp, op, "line")
        assert res.variant == "aFinal"

    def test_unordered_line_is_sorted(self, tmp_path):
        t = np.array([0.0, 0.5, 0.25, 1.0, 0.75])
        sp, op = _problem_files(tmp_path, t[:, None], np.arange(5.0), ordered=False)
        x, d = load_problem(sp, op, "line")
        assert d.sites.tolist() == [0, 0.25, 0.5, 0.75, 1] and x.tolist() == [0, 2, 1, 4, 3]

    def test_line_claimed_ordered_but_not(self, tmp_path):
        sp, op = _problem_files(tmp_path, np.array([[0.0], [0.5], [0.25]]), np.zeros(3))
        with pytest.raises(DesignError):
            load_problem(sp, op, "line")

    def test_lattice_count_mismatch(self, tmp_path):
        d = build_design("lattice", "exp3", 6)
        sp, op = _problem_files(tmp_path, d.points.reshape(-1, 2), np.zeros(35))
        with pytest.raises(DesignError, match="36"):
            load_problem(sp, op, "lattice")

    def test_lattice_not_square(self, tmp_path):
        sp, op = _problem_files(tmp_path, np.random.default_rng(0).random((10, 2)), np.zeros(10))
        with pytest.raises(DesignError):
            load_problem(sp, op, "lattice")

    def test_shuffled_curve_same_estimate(self, tmp_path):
        d = build_design("curve", "exp2", 120)
        from qvsmooth.covariance import CovarianceModel
        from qvsmooth.grf import factor, sample
        x = sample(factor(CovarianceModel(0.5), d.site_set(), master_seed=0), 0)
        perm = np.random.default_rng(5).permutation(120)
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        ordered = estimate_from_files(*_problem_files(tmp_path / "a", d.points, x), "curve")
        shuffled = estimate_from_files(*_problem_files(tmp_path / "b", d.points[perm], x[perm], False), "curve")
        assert ordered.to_dict() == shuffled.to_dict()

    @pytest.mark.parametrize("content", ["[1, 2", "{\"observations\": [1, \"x\"]}", "[[1, 2]]", "[1, NaN]"])
    def test_bad_observations(self, tmp_path, content):
        p = tmp_path / "o.json"
        p.write_text(content)
        with pytest.raises(DesignError):
            H.read_observations(p)

    def test_dimension_mismatch(self, tmp_path):
        sp, op = _problem_files(tmp_path, np.random.default_rng(0).random((10, 2)), np.zeros(10))
        with pytest.raises(DesignError):
            load_problem(sp, op, "line")
