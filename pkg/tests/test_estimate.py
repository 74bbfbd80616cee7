"""
Tests for sampling, maximum-likelihood fitting and the numeric f-divergences.
"""
import numpy as np
import pytest
from scipy import stats

from mixsing.config import DEFAULT_CONFIG, FitConfig
from mixsing.constants import Family
from mixsing.errors import BadParams, GridTooCoarse, NoConvergedStart
from mixsing.estimate import QuadratureScheme, Sample, fit_mle, hellinger, loglik, sample, tv
from mixsing.mixing import ParamBox, make_measure
from mixsing.transport import TransportSpec, distance_value

GAUSS = Family.GAUSSIAN


def gaussian_box(mass_floor=0.0):
    return ParamBox.from_config(GAUSS, DEFAULT_CONFIG, mass_floor)


class TestSample:
    def test_skew_mean(self, single_skew):
        # δ √(2/π) with δ = 2/√5
        data = sample(single_skew, 200000, seed=1).observations
        assert data.mean() == pytest.approx(0.7136, abs=0.01)

    def test_same_seed_same_sample(self, s1_measure):
        first = sample(s1_measure, 100, seed=42).observations
        second = sample(s1_measure, 100, seed=42).observations
        assert np.array_equal(first, second)
        assert not np.array_equal(first, sample(s1_measure, 100, seed=43).observations)

    def test_gamma_mean(self, gamma_generic):
        data = sample(gamma_generic, 100000, seed=3).observations
        # 0.5·2 + 0.5·2.5
        assert data.mean() == pytest.approx(2.25, rel=0.02)

    def test_kolmogorov_smirnov(self, gaussian_pair):
        data = sample(gaussian_pair, 5000, seed=9).observations

        def mixture_cdf(x):
            return 0.4 * stats.norm.cdf(x, -2, 1) + 0.6 * stats.norm.cdf(x, 2, 1)

        assert stats.kstest(data, mixture_cdf).pvalue > 1e-3

    def test_text_round_trip(self, single_skew):
        s = sample(single_skew, 10, seed=5)
        back = Sample.from_text(s.to_text())
        assert np.array_equal(back.observations, s.observations)

    def test_empty_text(self):
        with pytest.raises(BadParams):
            Sample.from_text("\n")

    def test_rejects_zero_n(self, single_skew):
        with pytest.raises(BadParams):
            sample(single_skew, 0, seed=1)


class TestDistances:
    def test_hellinger_closed_form(self):
        p = make_measure([(0, 1)], [1.0], GAUSS)
        q = make_measure([(1, 1)], [1.0], GAUSS)
        assert hellinger(p, q) == pytest.approx(np.sqrt(1 - np.exp(-1 / 8)), rel=1e-8)

    def test_le_cam(self, s0_measure, s1_measure):
        h, v = hellinger(s0_measure, s1_measure), tv(s0_measure, s1_measure)
        assert h**2 <= v <= np.sqrt(2) * h

    def test_identical(self, s1_measure):
        assert hellinger(s1_measure, s1_measure) == pytest.approx(0.0, abs=1e-12)

    def test_callable_needs_scheme(self, single_skew):
        with pytest.raises(BadParams):
            tv(stats.norm.pdf, stats.norm(1, 1).pdf)
        scheme = QuadratureScheme.for_interval(-15, 15)
        assert tv(stats.norm.pdf, stats.norm(1, 1).pdf, scheme) == pytest.approx(
            2 * stats.norm.cdf(0.5) - 1, rel=1e-8)

    def test_grid_too_coarse(self, gaussian_pair):
        with pytest.raises(GridTooCoarse):
            hellinger(gaussian_pair, gaussian_pair, QuadratureScheme.for_interval(-1, 1))


class TestFit:
    def test_single_gaussian_closed_form(self):
        data = sample(make_measure([(1.0, 4.0)], [1.0], GAUSS), 2000, seed=11).observations
        result = fit_mle(data, GAUSS, 1, gaussian_box())
        (eta,) = result.measure.atoms
        assert eta.theta == pytest.approx(data.mean(), abs=1e-6)
        assert eta.v == pytest.approx(data.var(), rel=1e-5)
        assert result.converged

    def test_two_gaussians(self, gaussian_pair):
        data = sample(gaussian_pair, 5000, seed=12).observations
        fitted = fit_mle(data, GAUSS, 2, gaussian_box()).measure
        assert distance_value(TransportSpec.wasserstein(1), fitted, gaussian_pair) < 0.1

    def test_skew_fit_beats_truth(self, single_skew):
        data = sample(single_skew, 3000, seed=13).observations
        box = ParamBox.from_config(Family.SKEW_NORMAL, DEFAULT_CONFIG, 0.0)
        result = fit_mle(data, Family.SKEW_NORMAL, 1, box, FitConfig(starts=4))
        truth = loglik(data, Family.SKEW_NORMAL, single_skew.coords_array(),
                       single_skew.weights_array())
        assert result.loglik >= truth - 1e-6

    def test_respects_box(self):
        data = sample(make_measure([(5.0, 1.0)], [1.0], GAUSS), 500, seed=14).observations
        box = ParamBox(GAUSS, ((-1.0, 1.0), (0.1, 4.0)))
        (eta,) = fit_mle(data, GAUSS, 1, box).measure.atoms
        assert eta.theta <= 1.0

    def test_respects_mass_floor(self):
        data = sample(make_measure([(0.0, 1.0)], [1.0], GAUSS), 1000, seed=15).observations
        fitted = fit_mle(data, GAUSS, 2, gaussian_box(0.2)).measure
        assert min(fitted.weights) >= 0.2 - 1e-9

    def test_fixed_coordinate(self, gaussian_pair):
        data = sample(gaussian_pair, 2000, seed=16).observations
        fitted = fit_mle(data, GAUSS, 2, gaussian_box(), FitConfig(fixed={1: 1.0})).measure
        assert all(eta.v == 1.0 for eta in fitted.atoms)

    def test_deterministic(self, gaussian_pair):
        data = sample(gaussian_pair, 1000, seed=17).observations
        first = fit_mle(data, GAUSS, 2, gaussian_box())
        second = fit_mle(data, GAUSS, 2, gaussian_box())
        assert first.measure == second.measure

    def test_no_converged_start(self, gaussian_pair):
        data = sample(gaussian_pair, 1000, seed=18).observations
        with pytest.raises(NoConvergedStart):
            fit_mle(data, GAUSS, 2, gaussian_box(), FitConfig(starts=2, max_iter=1))

    def test_box_family(self, gaussian_pair):
        box = ParamBox.from_config(Family.GAMMA, DEFAULT_CONFIG)
        with pytest.raises(BadParams):
            fit_mle([1.0, 2.0], GAUSS, 1, box)
