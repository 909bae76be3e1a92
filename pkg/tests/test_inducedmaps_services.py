import math

import numpy as np
import pytest

from domains.exprfield.services import make_field, make_map
from domains.flowcore.services import build_morse_datum
from domains.inducedmaps.maps import ComposedMap, ExpressionMap, FlowTimeMap, MapFamily, identity_map
from domains.inducedmaps.models import HomotopyEndpointError
from domains.inducedmaps.services import (
    compose_with_flow,
    count_map_intersections,
    homology_matrices,
    homotopy_check,
    induced_chain_map,
    perturb_to_transverse,
)
from domains.moduli.models import IndexMismatchError
from domains.zalgebra.services import equal_on_homology, induced_on_homology

from tests.factories import interval_datum


class TestMaps:
    """점 사상 구성 테스트"""

    def test_identity_preimage(self, square):
        """항등사상의 역상은 자기 자신 하나"""
        pre = identity_map(square).preimages([0.2, 0.3], seeds_per_axis=3)
        assert len(pre) == 1
        np.testing.assert_allclose(pre[0], [0.2, 0.3], atol=1e-10)

    def test_family_fixes_last_variable(self, line):
        """h_λ 는 마지막 변수에 λ 를 대입"""
        family = MapFamily(line, line, ("x1 + x2",))
        assert family.at(0.5).image([1.0])[0] == pytest.approx(1.5)

    def test_composition_domains_checked(self, line, circle):
        """타깃과 소스가 다르면 합성 거부"""
        with pytest.raises(ValueError):
            ComposedMap((identity_map(line), identity_map(circle)))

    def test_flow_time_map(self, well):
        """x1² 의 흐름 시간사상: x ↦ x·e^{−2t}"""
        datum = build_morse_datum(well)
        psi = FlowTimeMap(datum.flow, 0.5)
        assert psi.image([1.0])[0] == pytest.approx(math.exp(-1.0), rel=1e-6)
        y, J = psi.evaluate([1.0])
        assert J[0, 0] == pytest.approx(math.exp(-1.0), rel=1e-5)
        assert psi.preimages(y)[0][0] == pytest.approx(1.0, rel=1e-6)

    def test_flow_time_jacobian_not_normalized(self, square):
        """비등방 우물: Dψ = diag(e^{−2t}, e^{−6t}) 그대로 (재직교화 없음)"""
        datum = build_morse_datum(make_field(square, "x1^2 + 3*x2^2"))
        _, J = FlowTimeMap(datum.flow, 0.25).evaluate([0.4, -0.3])
        np.testing.assert_allclose(J, np.diag([math.exp(-0.5), math.exp(-1.5)]), rtol=1e-6, atol=1e-9)

    def test_flow_time_jacobian_matches_finite_difference(self, height):
        """토러스 흐름의 Dψ 가 상의 중심 차분과 일치"""
        datum = build_morse_datum(height)
        psi = FlowTimeMap(datum.flow, 0.2)
        p = np.array([0.3, 0.2])
        _, J = psi.evaluate(p)
        h = 1e-4
        fd = np.column_stack(
            [height.domain.displacement(psi.image(p - h * e), psi.image(p + h * e)) / (2 * h) for e in np.eye(2)]
        )
        np.testing.assert_allclose(J, fd, rtol=1e-4, atol=1e-5)

    def test_zero_duration_is_identity(self, well):
        """시간 0 의 흐름 사상은 항등, 야코비안 I"""
        y, J = FlowTimeMap(build_morse_datum(well).flow, 0.0).evaluate([0.7])
        assert y[0] == pytest.approx(0.7)
        np.testing.assert_array_equal(J, np.eye(1))


class TestInducedChainMap:
    """유도 사슬사상 테스트"""

    def test_identity_on_circle(self, circle_cos):
        """항등사상은 호몰로지에서 항등"""
        datum = build_morse_datum(circle_cos)
        M = induced_chain_map(identity_map(datum.domain), datum, datum)
        assert homology_matrices(M) == {0: [[1]], 1: [[1]]}

    def test_rotation_is_isomorphism(self, circle, circle_cos):
        """회전은 항등과 호모토픽: H_0 에서 1, H_1 에서 가역"""
        datum = build_morse_datum(circle_cos)
        rotate = ExpressionMap(make_map(circle, circle, ["x1 + 0.1"]))
        on_h = induced_on_homology(induced_chain_map(rotate, datum, datum))
        assert on_h[0].to_rows() == [[1]]
        assert abs(on_h[1].det()) == 1

    def test_index_mismatch(self, circle_cos):
        """지표가 다른 쌍은 세지 않음"""
        datum = build_morse_datum(circle_cos)
        top, bottom = datum.of_index(1)[0], datum.of_index(0)[0]
        with pytest.raises(IndexMismatchError):
            count_map_intersections(identity_map(datum.domain), datum, datum, top.label, bottom.label)

    def test_transverse_without_shift(self, circle_cos):
        """이미 횡단이면 ε = 0 을 그대로 채택"""
        datum = build_morse_datum(circle_cos)
        result = perturb_to_transverse(identity_map(datum.domain), datum, datum)
        assert result.epsilon == 0.0
        assert result.attempt == 0
        assert result.rejected == []
        assert result.direction == (0.0,)

    @pytest.mark.parametrize("degree", [2, 3])
    def test_circle_degree(self, circle, degree):
        """차수 d 사상은 H_1 에서 ×d"""
        datum = build_morse_datum(make_field(circle, "cos(2*pi*(x1 - 0.1))"))
        h = ExpressionMap(make_map(circle, circle, [f"{degree}*x1"]))
        assert homology_matrices(induced_chain_map(h, datum, datum)) == {0: [[1]], 1: [[degree]]}

    def test_circle_degree_composite(self, circle):
        """(3x)∘(2x) 의 유도사상은 ×6 이고 두 유도사상의 곱과 같음"""
        datum = build_morse_datum(make_field(circle, "cos(2*pi*(x1 - 0.1))"))
        h2 = ExpressionMap(make_map(circle, circle, ["2*x1"]))
        h3 = ExpressionMap(make_map(circle, circle, ["3*x1"]))
        M2 = induced_chain_map(h2, datum, datum)
        M3 = induced_chain_map(h3, datum, datum)
        M6 = induced_chain_map(ComposedMap((h2, h3)), datum, datum)
        assert homology_matrices(M6)[1] == [[6]]
        assert equal_on_homology(M6, M3.compose(M2))

    def test_local_identity(self, isolation):
        """국소 데이터 사이 항등사상 (고립성 인증 후)"""
        A, N = interval_datum("x1^2", region=[[-1.0, 1.0]])
        M = induced_chain_map(identity_map(A.domain), A, A, region_A=N, region_B=N, isolation=isolation)
        assert homology_matrices(M) == {0: [[1]]}


class TestFunctoriality:
    """흐름 삽입 합성/호모토피 테스트"""

    @pytest.mark.slow
    def test_composition_without_flow_fails(self, isolation):
        """α = x², β = (x − 3)², γ = x²: 곱은 0, 합성은 항등"""
        A, N = interval_datum("x1^2", bounds=(-2.0, 5.0), region=[[-1.0, 1.0]])
        B, _ = interval_datum("(x1 - 3)^2", bounds=(-2.0, 5.0), region=[[-1.0, 1.0]])
        C, _ = interval_datum("x1^2", bounds=(-2.0, 5.0), region=[[-1.0, 1.0]])
        h = identity_map(A.domain)
        report = compose_with_flow(h, h, A, B, C, 0.0, regions=(N, N, N), isolation=isolation)
        assert not report.holds
        assert report.product.matrix(0).to_rows() == [[0]]
        assert report.composite_zero.matrix(0).to_rows() == [[1]]
        assert not report.composite_zero_agrees
        assert not report.isolation_holds
        lo, hi = report.isolation.violated_range
        assert lo - 1e-3 <= math.log(1.5) / 2 <= hi + 1e-3
        assert report.to_dict()["functoriality_hypothesis"] == "functoriality hypothesis violated"

    def test_composition_on_circle(self, circle_cos):
        """전역 데이터면 고립성 검사 없이 성립"""
        datum = build_morse_datum(circle_cos)
        h = identity_map(datum.domain)
        report = compose_with_flow(h, h, datum, datum, datum, 0.5)
        assert report.isolation is None
        assert report.holds

    def test_homotopy_endpoint_checked(self, circle, circle_cos):
        """족의 끝점이 h1 과 다르면 거부"""
        datum = build_morse_datum(circle_cos)
        family = MapFamily(circle, circle, ("x1 + 0.1*x2",))
        h1 = ExpressionMap(make_map(circle, circle, ["x1 + 0.2"]))
        with pytest.raises(HomotopyEndpointError) as ei:
            homotopy_check(identity_map(circle), h1, family, datum, datum)
        assert ei.value.detail["lam"] == 1.0

    def test_homotopic_maps_agree(self, circle, circle_cos):
        """h_λ(x) = x + 0.1λ: 양 끝의 유도사상이 같음"""
        datum = build_morse_datum(circle_cos)
        family = MapFamily(circle, circle, ("x1 + 0.1*x2",))
        h1 = ExpressionMap(make_map(circle, circle, ["x1 + 0.1"]))
        report = homotopy_check(identity_map(circle), h1, family, datum, datum)
        assert report.holds
        assert report.isolation is None

    def test_homotopy_through_continuation(self, circle, circle_cos):
        """h1 을 다른 데이터에서 세면 연속사상을 거쳐 비교"""
        A = build_morse_datum(circle_cos)
        A1 = build_morse_datum(make_field(circle, "cos(2*pi*(x1 - 0.1))"))
        family = MapFamily(circle, circle, ("x1",))
        report = homotopy_check(identity_map(circle), identity_map(circle), family, A, A, data_1=(A1, A1))
        assert report.via_continuation
        assert report.holds
