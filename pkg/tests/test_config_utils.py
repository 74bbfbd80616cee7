"""
Tests for configuration loading, seeds, the worker pool and the memo table.
"""
import threading

import pytest

from mixsing import cache
from mixsing.config import (DEFAULT_CONFIG, FitConfig, RunConfig, SolverConfig, get_log_path,
                            get_user_config_path, load_config, resolve_jobs, save_config)
from mixsing.utils import derive_seed, log_function_call, run_parallel


class TestLoadConfig:
    def test_defaults_without_file(self):
        config = load_config()
        assert config["SOLVE_TOL"] == DEFAULT_CONFIG["SOLVE_TOL"]
        assert config["BOX"]["theta"] == [-10.0, 10.0]

    def test_merge(self, tmp_path):
        path = tmp_path / "config.yaml"
        path.write_text("MIN_STARTS: 77\nBOX:\n  v: [0.5, 5.0]\nSEED: null\n")
        config = load_config(path)
        assert config["MIN_STARTS"] == 77
        assert config["BOX"]["v"] == [0.5, 5.0]
        assert config["BOX"]["theta"] == [-10.0, 10.0]
        assert config["SEED"] == DEFAULT_CONFIG["SEED"]

    def test_does_not_mutate_defaults(self, tmp_path):
        path = tmp_path / "config.yaml"
        path.write_text("BOX:\n  m: [-1.0, 1.0]\n")
        load_config(path)
        assert DEFAULT_CONFIG["BOX"]["m"] == [-10.0, 10.0]

    def test_save_then_load(self):
        config = load_config()
        config["MIN_STARTS"] = 123
        save_config(config)
        assert get_user_config_path().exists()
        assert load_config()["MIN_STARTS"] == 123

    def test_log_path_directory(self, tmp_path):
        path = get_log_path()
        assert path == tmp_path / "mixsing.log"
        assert path.parent.is_dir()


class TestResolveJobs:
    def test_env_wins(self, monkeypatch):
        monkeypatch.setenv("MIXSING_JOBS", "3")
        assert resolve_jobs(8, {"JOBS": 2}) == 3

    def test_cli_then_config(self):
        assert resolve_jobs(4, {"JOBS": 2}) == 4
        assert resolve_jobs(None, {"JOBS": 2}) == 2
        assert resolve_jobs(None, {"JOBS": None}) >= 1

    def test_bad_env(self, monkeypatch):
        monkeypatch.setenv("MIXSING_JOBS", "many")
        with pytest.raises(ValueError):
            resolve_jobs()


class TestRunConfig:
    def test_seed_defaults_from_config(self):
        run = RunConfig.from_args("polysys", load_config())
        assert run.seed == DEFAULT_CONFIG["SEED"]
        assert run.solver.seed == run.seed

    def test_overrides(self):
        run = RunConfig.from_args("fit", load_config(), ["data.txt"], seed=5, jobs=2, starts=30,
                                  fixed={1: 1.0})
        assert run.solver.min_starts == 30
        assert run.fit.seed == 5
        assert run.fit.fixed == {1: 1.0}
        assert run.jobs == 2

    def test_stochastic_needs_seed(self):
        with pytest.raises(ValueError):
            RunConfig("sample")
        assert RunConfig("reduce").seed is None

    def test_solver_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(solve_tol=1e-3, unsolve_tol=1e-4)
        with pytest.raises(ValueError):
            SolverConfig(min_starts=0)

    def test_fit_validation(self):
        with pytest.raises(ValueError):
            FitConfig(starts=0)


class TestSeeds:
    def test_stable(self):
        assert derive_seed(1, "fit", 100, 3) == derive_seed(1, "fit", 100, 3)

    def test_keys_matter(self):
        seeds = {derive_seed(1, "fit", n, rep) for n in (100, 200) for rep in range(5)}
        assert len(seeds) == 10
        assert derive_seed(1, "fit", 100, 0) != derive_seed(2, "fit", 100, 0)

    def test_non_negative_63_bit(self):
        for i in range(50):
            assert 0 <= derive_seed(i, "x") < 2**63


class TestRunParallel:
    def test_submission_order(self):
        def square(x):
            return x * x

        assert run_parallel(square, range(20), jobs=4) == [x * x for x in range(20)]

    def test_inline_when_single_job(self):
        seen = []

        def record(x):
            seen.append(threading.get_ident())
            return x

        run_parallel(record, range(3), jobs=1)
        assert set(seen) == {threading.get_ident()}


class TestLogFunctionCall:
    def test_passes_through(self):
        @log_function_call
        def add(a, b):
            return a + b

        assert add(2, 3) == 5

    def test_reraises(self):
        @log_function_call
        def boom():
            raise KeyError("x")

        with pytest.raises(KeyError):
            boom()

    def test_rejects_non_callable(self):
        with pytest.raises(TypeError):
            log_function_call(3)


class TestCache:
    def test_get_or_build(self, fresh_cache):
        calls = []

        def build():
            calls.append(1)
            return "value"

        assert cache.get_or_build("k", build) == "value"
        assert cache.get_or_build("k", build) == "value"
        assert len(calls) == 1

    def test_invalidate(self, fresh_cache):
        cache.set_in_cache("k", 1)
        cache.invalidate_cache("k")
        assert cache.get_from_cache("k") is None
