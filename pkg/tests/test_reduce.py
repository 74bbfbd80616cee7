"""
Tests for derivative reduction and minimal forms.
"""
import numpy as np
import pytest
import sympy as sp

from mixsing.constants import Family, Setting
from mixsing.errors import NotApplicable, NotS0, OrderTooHigh, PoleAtZeroShape
from mixsing.kernels import mixture_density, partial_at
from mixsing.mixing import ConvergentRep, ParamVec, split_atom
from mixsing.reduce import (M, V, RationalCoef, basis_indices, build_minimal_form, evaluate_reduced,
                            format_reduction, gram_is_independent, in_basis, lowest_t_order,
                            reduce_gaussian, reduce_skew, reduction_table)

SKEW = Family.SKEW_NORMAL
NUMERIC_TOL = 1e-5

C = (M**2 + 1) / (2 * V * M)

# the six third-order identities, as {basis index: coefficient}
THIRD_ORDER = {
    (3, 0, 0): {(1, 1, 0): 2, (1, 0, 1): -(M**3 + M) / V},
    (2, 1, 0): {(0, 2, 0): 2, (0, 0, 1): 2 * M * (M**2 + 1) / V**2,
                (0, 0, 2): (M**2 + 1)**2 / (2 * V**2)},
    (2, 0, 1): {(0, 0, 1): -3 * (M**2 + 1) / V, (0, 0, 2): -(M**2 + 1)**2 / (V * M)},
    (1, 1, 1): {(1, 0, 1): -1 / V, (1, 0, 2): -C},
    (0, 2, 1): {(0, 0, 1): 2 / V**2, (0, 0, 2): (M**2 + 1) * (7 * M**2 - 1) / (4 * M**3 * V**2),
                (0, 0, 3): (M**2 + 1)**2 / (4 * V**2 * M**2)},
    (0, 1, 2): {(0, 0, 2): -(3 * M**2 - 1) / (2 * V * M**2), (0, 0, 3): -C},
}


class TestRationalCoef:
    def test_cancelled_on_construction(self):
        coef = RationalCoef((M**2 - 1) / (M - 1))
        assert coef.equals(M + 1)

    def test_pole_at_zero_shape(self):
        coef = RationalCoef(1 / M)
        assert coef.has_pole_at_zero_shape()
        with pytest.raises(PoleAtZeroShape):
            coef.evaluate(1.0, 0.0)

    def test_evaluate(self):
        assert RationalCoef((M**3 + M) / V).evaluate(2.0, 1.0) == pytest.approx(1.0)


class TestBasis:
    def test_second_order_basis(self):
        assert basis_indices(2) == [(0, 0, 0), (1, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 1),
                                    (1, 1, 0), (0, 0, 2), (0, 2, 0)]

    def test_membership(self):
        assert in_basis((1, 2, 0))
        assert in_basis((0, 0, 4))
        assert not in_basis((2, 0, 0))
        assert not in_basis((0, 1, 1))


class TestReduceSkew:
    def test_basis_index_is_identity(self):
        rd = reduce_skew((1, 0, 0))
        assert rd.indices == [(1, 0, 0)]
        assert rd.coefficient((1, 0, 0)).equals(1)

    def test_first_rule(self):
        rd = reduce_skew((2, 0, 0))
        assert rd.coefficient((0, 1, 0)).equals(2)
        assert rd.coefficient((0, 0, 1)).equals(-(M**3 + M) / V)

    @pytest.mark.parametrize("alpha", sorted(THIRD_ORDER))
    def test_third_order_golden(self, alpha):
        rd = reduce_skew(alpha)
        expected = THIRD_ORDER[alpha]
        assert set(rd.indices) == set(expected)
        for kappa, coef in expected.items():
            assert rd.coefficient(kappa).equals(coef), f"{alpha} -> {kappa}: {rd.coefficient(kappa)}"

    def test_third_order_table_covers_all(self):
        assert {rd.source for rd in reduction_table(3)} == set(THIRD_ORDER)

    def test_numeric_agreement(self):
        rng = np.random.default_rng(17)
        x = np.linspace(-4, 4, 41)
        for alpha in [(2, 1, 1), (0, 3, 1), (3, 1, 0), (1, 2, 1)] + sorted(THIRD_ORDER):
            for _ in range(3):
                eta = ParamVec(SKEW, (rng.uniform(-1, 1), rng.uniform(0.5, 2), rng.uniform(0.5, 2)))
                reduced = evaluate_reduced(reduce_skew(alpha), SKEW, eta, x)
                direct = partial_at(SKEW, eta.coords, x, alpha)
                scale = np.max(np.abs(direct))
                assert np.max(np.abs(reduced - direct)) <= NUMERIC_TOL * scale

    def test_against_finite_difference(self):
        eta = ParamVec(SKEW, (0.2, 1.3, 0.8))
        x = np.linspace(-3, 3, 25)
        h = 1e-4
        up = partial_at(SKEW, (0.2, 1.3 + h, 0.8), x, (0, 1, 1))
        down = partial_at(SKEW, (0.2, 1.3 - h, 0.8), x, (0, 1, 1))
        fd = (up - down) / (2 * h)
        reduced = evaluate_reduced(reduce_skew((0, 2, 1)), SKEW, eta, x)
        assert np.max(np.abs(reduced - fd)) <= NUMERIC_TOL * np.max(np.abs(fd))

    def test_degree_never_grows(self):
        for order in range(2, 6):
            for rd in reduction_table(order):
                assert rd.degree_bound_holds()
                assert all(in_basis(k) for k in rd.indices)

    def test_zero_shape_pole(self):
        eta = ParamVec(SKEW, (0.0, 1.0, 0.0))
        with pytest.raises(PoleAtZeroShape):
            evaluate_reduced(reduce_skew((1, 1, 1)), SKEW, eta, np.zeros(3))

    def test_order_cap(self):
        with pytest.raises(OrderTooHigh):
            reduce_skew((4, 2, 1))

    def test_format(self):
        assert format_reduction(reduce_skew((2, 0, 0))).startswith("dtheta^2 f = ")


class TestReduceGaussian:
    def test_half_second_location(self):
        rd = reduce_gaussian((0, 1))
        assert rd.indices == [(2, 0)]
        assert rd.coefficient((2, 0)).equals(sp.Rational(1, 2))

    def test_identity(self):
        assert reduce_gaussian((1, 0)).indices == [(1, 0)]

    def test_fourth_location(self):
        rd = reduce_gaussian((0, 2))
        assert rd.indices == [(4, 0)]
        assert rd.coefficient((4, 0)).equals(sp.Rational(1, 4))

    def test_table(self):
        assert [rd.source for rd in reduction_table(2, Family.GAUSSIAN)] == [(1, 1), (0, 2)]


class TestMinimalForm:
    def test_eight_coefficients_for_one_atom(self, single_skew):
        form = build_minimal_form(single_skew, 2)
        assert len(form.basis()) == 8

    def test_zero_at_identity(self, single_skew):
        form = build_minimal_form(single_skew, 2)
        rep = ConvergentRep(single_skew, (((1.0, single_skew.atoms[0]),),))
        assert all(v == 0.0 for v in form.coefficients(rep).values())

    def test_symbolic_second_order_shape_term(self, single_skew):
        # the (0,0,1) coefficient carries -((m^3+m)/2v) Σ p (Δθ)^2
        form = build_minimal_form(single_skew, 2, Setting.OVER)
        t = sp.Symbol("t")
        v0, m0 = sp.Integer(1), sp.Integer(2)
        groups = [[(sp.Rational(1, 2), (t, 0, 0)), (sp.Rational(1, 2), (-t, 0, 0))]]
        xi = form.symbolic_coefficients([(v0, m0)], groups, [sp.Integer(0)])
        assert sp.simplify(xi[(0, (0, 0, 1))] + (m0**3 + m0) / (2 * v0) * t**2) == 0
        assert sp.simplify(xi[(0, (0, 1, 0))] - t**2) == 0

    def test_expansion_error_is_third_order(self, single_skew):
        form = build_minimal_form(single_skew, 2)
        x = np.linspace(-4, 6, 201)
        errors = []
        for t in (0.02, 0.01):
            group = split_atom(single_skew, 0, [(1.0, (0.3 * t, 0.2 * t, -0.1 * t))])
            rep = ConvergentRep(single_skew, (group,))
            diff = mixture_density(rep.to_measure(), x) - mixture_density(single_skew, x)
            errors.append(np.max(np.abs(diff - form.approximation(rep, x))))
        assert 1 / 12 < errors[1] / errors[0] < 1 / 5

    def test_gram_independent_for_generic_atoms(self, s0_measure):
        form = build_minimal_form(s0_measure, 1)
        assert gram_is_independent(form, list(s0_measure.atoms), np.linspace(-6, 8, 800))

    def test_requires_s0(self, s1_measure):
        with pytest.raises(NotS0):
            build_minimal_form(s1_measure, 2)

    def test_gamma_not_applicable(self, gamma_generic):
        with pytest.raises(NotApplicable):
            build_minimal_form(gamma_generic, 2)

    def test_gaussian_basis(self, gaussian_pair):
        form = build_minimal_form(gaussian_pair, 2)
        assert form.basis_local == [(0, 0), (1, 0), (2, 0), (3, 0), (4, 0)]


class TestLowestOrder:
    def test_orders(self):
        t = sp.Symbol("t")
        assert lowest_t_order(t**3 + t**5, t) == 3
        assert lowest_t_order(sp.Integer(0), t) == float("inf")
        assert lowest_t_order(1e-20 * t + t**2, t) == 2
