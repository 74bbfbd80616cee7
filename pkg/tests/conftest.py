"""
Shared fixtures: hand-built mixing measures of every class.
"""
import pytest

from mixsing import cache
from mixsing.config import DEFAULT_CONFIG, SolverConfig
from mixsing.constants import Family
from mixsing.mixing import make_measure

SKEW = Family.SKEW_NORMAL


@pytest.fixture(autouse=True)
def _log_to_tmp(tmp_path, monkeypatch):
    # config lookups and the log file resolve under a temporary home
    monkeypatch.setenv("HOME", str(tmp_path))
    monkeypatch.setitem(DEFAULT_CONFIG, "LOG_FILE_PATH", str(tmp_path / "mixsing.log"))
    monkeypatch.delenv("MIXSING_JOBS", raising=False)


@pytest.fixture
def fresh_cache():
    cache.clear_cache()
    yield
    cache.clear_cache()


@pytest.fixture
def fast_solver():
    return SolverConfig(min_starts=40, batch=20)


@pytest.fixture
def s0_measure():
    return make_measure([(0.0, 1.0, 1.0), (1.0, 2.0, -1.0)], [0.5, 0.5], SKEW)


@pytest.fixture
def s1_measure():
    # v/(1+m^2) = 1 for both atoms
    return make_measure([(0.0, 2.0, 1.0), (0.0, 5.0, 2.0)], [0.4, 0.6], SKEW)


@pytest.fixture
def s2_measure():
    return make_measure([(0.0, 1.0, 0.0), (3.0, 2.0, 1.0)], [0.5, 0.5], SKEW)


@pytest.fixture
def s31_pair_measure():
    return make_measure([(0.0, 2.0, 1.0), (0.0, 5.0, -2.0)], [0.4, 0.6], SKEW)


@pytest.fixture
def s31_triple_negative():
    # signed triple sum -1.9
    return make_measure([(0.0, 2.0, 1.0), (0.0, 5.0, 2.0), (0.0, 10.0, -3.0)], [0.3, 0.3, 0.4], SKEW)


@pytest.fixture
def s31_triple_positive():
    # signed triple sum 0.9
    return make_measure([(0.0, 2.0, 1.0), (0.0, 5.0, 2.0), (0.0, 1.25, -0.5)], [0.2, 0.2, 0.6], SKEW)


@pytest.fixture
def s32_measure():
    # p1*m2 + p2*m1 = 0
    return make_measure([(0.0, 2.0, 1.0), (0.0, 5.0, -2.0)], [1 / 3, 2 / 3], SKEW)


@pytest.fixture
def s33_measure():
    return make_measure([(0.0, 1.0, 1.0), (0.0, 1.0, -1.0)], [0.5, 0.5], SKEW)


@pytest.fixture
def gamma_generic():
    return make_measure([(2.0, 1.0), (5.0, 2.0)], [0.5, 0.5], Family.GAMMA)


@pytest.fixture
def gamma_pathological():
    return make_measure([(2.0, 1.0), (3.0, 1.0)], [0.5, 0.5], Family.GAMMA)


@pytest.fixture
def gaussian_pair():
    return make_measure([(-2.0, 1.0), (2.0, 1.0)], [0.4, 0.6], Family.GAUSSIAN)


@pytest.fixture
def single_skew():
    return make_measure([(0.0, 1.0, 2.0)], [1.0], SKEW)
