"""
Tests for the singularity partition and the reports built on it.
"""
import json
from math import inf

import pytest

from mixsing.constants import Family, Label, LevelKind, Setting
from mixsing.errors import BadParams, NotS0
from mixsing.classify import (classify, classify_gamma, classify_omixture, fisher_rank,
                              homologous, homology_structure, report_from_dict,
                              singularity_matrix, skew_partition, type_polynomials)
from mixsing.mixing import ParamVec, make_measure

SKEW = Family.SKEW_NORMAL


class TestHomology:
    def test_rescaled_scale_match(self):
        assert homologous(ParamVec(SKEW, (0, 2, 1)), ParamVec(SKEW, (0, 5, 2)))
        assert not homologous(ParamVec(SKEW, (0, 2, 1)), ParamVec(SKEW, (0, 5, 1)))
        assert not homologous(ParamVec(SKEW, (0, 2, 1)), ParamVec(SKEW, (1, 5, 2)))

    def test_classes_and_conformance(self, s31_triple_negative, s1_measure):
        structure = homology_structure(s31_triple_negative)
        assert structure.classes == ((0, 1, 2),)
        assert structure.nonconformant == [0]
        assert homology_structure(s1_measure).conformant == (True,)

    def test_c1_flag(self, s32_measure, s31_pair_measure):
        assert homology_structure(s32_measure).c1 == (True,)
        assert homology_structure(s31_pair_measure).c1 == (False,)


class TestTypePolynomials:
    def test_generic_measure(self, s0_measure):
        polys = type_polynomials(s0_measure)
        assert polys.p1 == pytest.approx(-1.0)
        assert not (polys.p1_zero or polys.p2_zero)

    def test_zero_shape(self, s2_measure):
        assert type_polynomials(s2_measure).p1_zero

    def test_s33_p4(self, s33_measure):
        assert type_polynomials(s33_measure).p4_zero

    def test_rejects_gamma(self, gamma_generic):
        with pytest.raises(BadParams):
            type_polynomials(gamma_generic)


class TestSkewPartition:
    @pytest.mark.parametrize("fixture,label", [
        ("s0_measure", Label.S0),
        ("single_skew", Label.S0),
        ("s1_measure", Label.S1),
        ("s2_measure", Label.S2),
        ("s31_pair_measure", Label.S31),
        ("s31_triple_negative", Label.S31),
        ("s31_triple_positive", Label.S31),
        ("s32_measure", Label.S32),
        ("s33_measure", Label.S33),
    ])
    def test_labels(self, request, fixture, label):
        assert skew_partition(request.getfixturevalue(fixture)).label == label


class TestExactFitted:
    @pytest.mark.parametrize("fixture,level,index", [
        ("s0_measure", 0, (1, 1, 1)),
        ("s1_measure", 1, (1, 1, 2)),
        ("s2_measure", 2, (3, 2, 3)),
        ("s31_pair_measure", 1, (1, 1, 2)),
        ("s31_triple_positive", 1, (1, 1, 2)),
        ("s31_triple_negative", 2, (1, 1, 3)),
        ("s32_measure", 3, (1, 1, 4)),
    ])
    def test_levels(self, request, fixture, level, index):
        report = classify(request.getfixturevalue(fixture))
        assert report.level.kind == LevelKind.EXACT
        assert report.level.value == level
        assert report.index_set == (index,)
        assert report.consistent()

    def test_s33_is_infinite(self, s33_measure):
        report = classify(s33_measure)
        assert report.level.kind == LevelKind.INF
        assert report.level.value == inf
        assert report.index_set == ((inf, inf, inf),)

    def test_s2_matrix(self, s2_measure):
        report = classify(s2_measure)
        assert report.matrix == ((3.0, 2.0, 3.0), (1.0, 1.0, 1.0))

    def test_s1_matrix(self, s1_measure):
        assert singularity_matrix(s1_measure, Label.S1) == ((1.0, 1.0, 2.0), (1.0, 1.0, 2.0))

    def test_s31_records_sbar(self, s31_triple_negative):
        assert classify(s31_triple_negative).aux["sbar"] == 2

    def test_no_warnings_far_from_boundary(self, s0_measure):
        assert classify(s0_measure).warnings == ()

    def test_boundary_warning(self):
        G = make_measure([(0, 2, 1), (1e-3, 5, 2)], [0.4, 0.6], SKEW)
        report = classify(G)
        assert report.label == Label.S0
        assert report.warnings and report.warnings[0].startswith("boundary-proximity")

    def test_unknown_setting(self, s0_measure):
        with pytest.raises(BadParams):
            classify(s0_measure, "x")


class TestOtherFamilies:
    def test_gamma_generic(self, gamma_generic):
        report = classify(gamma_generic)
        assert report.label == Label.GAMMA_GENERIC
        assert report.level.value == 0

    def test_gamma_generic_overfitted(self, gamma_generic):
        report = classify_gamma(gamma_generic, Setting.OVER)
        assert report.level.value == 1
        assert report.index_set == ((2, 2),)

    def test_gamma_pathological(self, gamma_pathological):
        report = classify(gamma_pathological)
        assert report.label == Label.GAMMA_PATHOLOGICAL
        assert report.level.kind == LevelKind.INF
        assert report.aux["pathological_pairs"] == [[0, 1]]

    def test_gamma_shape_below_one(self):
        G = make_measure([(0.5, 1), (2, 1)], [0.5, 0.5], Family.GAMMA)
        with pytest.raises(BadParams):
            classify(G)

    def test_gaussian_first_order(self, gaussian_pair):
        report = classify(gaussian_pair)
        assert report.label == Label.FIRST_ORDER
        assert report.level.value == 0


class TestOverFitted:
    def test_gaussian_known_variance(self, gaussian_pair):
        report = classify(gaussian_pair, Setting.OVER, k=3, known_variance=True)
        assert report.label == Label.SECOND_ORDER
        assert report.level.value == 1

    def test_gaussian_rbar(self, gaussian_pair):
        report = classify(gaussian_pair, Setting.OVER, k=3)
        assert report.label == Label.O_GAUSSIAN
        assert report.level.value == 3
        assert report.index_set == ((4.0, 2.0),)

    def test_skew_uses_rho(self, single_skew):
        report = classify_omixture(single_skew, 2)
        assert report.label == Label.O_SKEW
        assert report.level.kind == LevelKind.BOUND
        assert report.level.value == 3
        assert report.index_set == ((4.0, 2.0, 2.0),)

    def test_requires_s0(self, s1_measure):
        with pytest.raises(NotS0):
            classify(s1_measure, Setting.OVER, k=3)

    def test_needs_more_components(self, s0_measure):
        with pytest.raises(BadParams):
            classify(s0_measure, Setting.OVER, k=2)

    def test_needs_k(self, s0_measure):
        with pytest.raises(BadParams):
            classify(s0_measure, Setting.OVER)

    def test_mass_floor(self, s0_measure):
        with pytest.raises(BadParams):
            classify(s0_measure, Setting.OVER, k=3, c0=0.4)


class TestReportSerialization:
    def test_level_json(self, s0_measure):
        assert classify(s0_measure).to_dict()["level"] == {"exact": 0}

    def test_round_trip(self, s33_measure, s31_triple_negative):
        for G in (s33_measure, s31_triple_negative):
            report = classify(G)
            data = json.loads(json.dumps(report.to_dict()))
            back = report_from_dict(data)
            assert back.level == report.level
            assert back.index_set == report.index_set
            assert back.label == report.label

    def test_malformed_level(self, s0_measure):
        data = classify(s0_measure).to_dict()
        data["level"] = {"exact": 0, "bound": 1}
        with pytest.raises(BadParams):
            report_from_dict(data)


class TestFisherRank:
    def test_generic_full_rank(self, s0_measure):
        rank, min_eig = fisher_rank(s0_measure)
        assert rank == 8
        assert min_eig > 0

    @pytest.mark.parametrize("fixture", ["s1_measure", "s2_measure"])
    def test_singular_classes_lose_rank(self, request, fixture):
        rank, _ = fisher_rank(request.getfixturevalue(fixture))
        assert rank < 8
