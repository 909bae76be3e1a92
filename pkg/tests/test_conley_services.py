import numpy as np
import pytest

from domains.conley.geometry import BoundaryDistance, boundary_mesh, merge_boxes, relative_cube_complex
from domains.conley.models import CertificationError, GeneralFlow, Verdict
from domains.conley.services import (
    anchor_flow,
    boundary_exit_homology,
    local_morse_homology,
    mcf_homology,
    mcf_induced_map,
    pullback_neighborhood,
    require_certified,
    verify_flow_map,
    verify_isolated_homotopy,
    verify_isolated_map,
    verify_isolating_neighborhood,
    verify_lyapunov,
)
from domains.exprfield.models import DomainError
from domains.exprfield.services import make_field, make_map
from domains.flowcore.models import Box, GradientFlow, Metric, Region
from domains.inducedmaps.maps import ExpressionMap, identity_map
from domains.zalgebra.services import homology


def _gradient(field_):
    return GradientFlow(field_, Metric.euclidean(field_.domain.dimension))


class TestGeometry:
    """경계 메쉬/거리/상자 병합/상대 입방체 테스트"""

    def test_boundary_mesh_normals(self, unit_interval):
        """1차원 경계는 두 점, 바깥 법선"""
        mesh, normals = boundary_mesh(unit_interval, 0.1)
        pts = sorted((float(p[0]), float(nu[0])) for p, nu in zip(mesh, normals))
        assert pts == [(-1.0, -1.0), (1.0, 1.0)]

    def test_boundary_distance_lower_bound(self, inner_square):
        """격자 거리는 실제 거리를 넘지 않음"""
        dist = BoundaryDistance(inner_square, 0.05)(np.array([[0.0, 0.0], [0.4, 0.0]]))
        assert dist[0] <= 0.5 + 1e-12
        assert dist[1] <= 0.1 + 1e-12
        assert dist[0] > dist[1] > 0

    def test_merge_adjacent_boxes(self):
        """면을 공유하는 상자는 하나로"""
        boxes = [Box((0.0, 0.0), (1.0, 1.0)), Box((1.0, 0.0), (2.0, 1.0)), Box((0.0, 1.0), (2.0, 2.0))]
        assert merge_boxes(boxes) == [Box((0.0, 0.0), (2.0, 2.0))]

    def test_disjoint_boxes_kept(self):
        """떨어진 상자는 그대로"""
        boxes = [Box((2.0,), (3.0,)), Box((0.0,), (1.0,))]
        assert merge_boxes(boxes) == [Box((0.0,), (1.0,)), Box((2.0,), (3.0,))]

    @pytest.mark.parametrize(
        "n, exits, betti",
        [
            (1, set(), (1, 0)),
            (1, {(0, "l"), (0, "u")}, (0, 1)),
            (1, {(0, "u")}, (0,)),
            (2, set(), (1, 0, 0)),
            (2, {(0, "l"), (0, "u")}, (0, 1, 0)),
            (2, {(0, "l"), (0, "u"), (1, "l"), (1, "u")}, (0, 0, 1)),
        ],
    )
    def test_relative_cube_homology(self, n, exits, betti):
        """H_*(Iⁿ, 출구 면)"""
        h = homology(relative_cube_complex(n, exits))
        assert h.betti_numbers(top=len(betti) - 1) == betti


class TestIsolation:
    """고립 근방 인증 테스트"""

    def test_well_certified(self, well, unit_interval, isolation):
        """x1² 의 그래디언트 흐름: [−1, 1] 은 고립 근방"""
        cert = verify_isolating_neighborhood(_gradient(well), unit_interval, isolation=isolation)
        assert cert.verdict is Verdict.CERTIFIED
        assert [float(p[0]) for p in cert.s_samples] == pytest.approx([0.0])
        assert cert.min_margin == pytest.approx(1.0)

    def test_equilibrium_on_boundary_refuted(self, well, line, isolation):
        """평형점이 경계 위면 반증"""
        N = Region.from_bounds(line, [[[0.0, 1.0]]])
        cert = verify_isolating_neighborhood(_gradient(well), N, isolation=isolation)
        assert cert.verdict is Verdict.REFUTED
        assert cert.refutations
        with pytest.raises(CertificationError) as ei:
            require_certified(cert, "isolating neighborhood")
        assert ei.value.detail["verdict"] == "refuted"

    def test_saddle_certified(self, saddle, inner_square, isolation):
        """안장점 주위 정사각형"""
        cert = verify_isolating_neighborhood(_gradient(saddle), inner_square, isolation=isolation)
        assert cert.certified
        assert len(cert.equilibria) == 1

    def test_empty_invariant_set(self, line, unit_interval, isolation):
        """평형점이 없으면 S 는 비어 있고 인증됨"""
        beta = make_field(line, "(x1 - 3)^2")
        cert = verify_isolating_neighborhood(_gradient(beta), unit_interval, isolation=isolation)
        assert cert.certified
        assert len(cert.s_samples) == 0

    def test_anchor_finds_equilibria(self, line, unit_interval):
        """일반 흐름의 평형점은 뉴턴으로"""
        flow = GeneralFlow.from_texts(line, ["-x1 - x1^3"])
        anchored = anchor_flow(flow, unit_interval)
        assert [float(e.coords[0]) for e in anchored.equilibria] == pytest.approx([0.0], abs=1e-9)
        assert anchored.equilibria[0].index == 0


class TestLocalHomology:
    """국소 모스 호몰로지 테스트"""

    def test_well(self, well, unit_interval, isolation):
        """최소점 하나: HM_0 = Z"""
        result = local_morse_homology(well, None, unit_interval, isolation=isolation)
        assert result.homology.betti_numbers() == (1,)
        assert result.neighborhood.certified

    def test_saddle(self, saddle, inner_square, isolation):
        """안장점 하나: HM_1 = Z"""
        result = local_morse_homology(saddle, None, inner_square, isolation=isolation)
        assert result.homology.betti_numbers() == (0, 1)

    def test_empty(self, line, unit_interval, isolation):
        """불변집합이 비면 호몰로지 0"""
        beta = make_field(line, "(x1 - 3)^2")
        result = local_morse_homology(beta, None, unit_interval, isolation=isolation)
        assert result.datum.critical_points == ()
        assert all(g.is_zero for g in result.homology.groups.values())

    def test_not_isolating_rejected(self, well, line, isolation):
        """인증 실패면 파이프라인 중단"""
        N = Region.from_bounds(line, [[[0.0, 1.0]]])
        with pytest.raises(CertificationError):
            local_morse_homology(well, None, N, isolation=isolation)


class TestConleyIndex:
    """랴푸노프 함수/모스–콘리–플뢰어 호몰로지 테스트"""

    def test_lyapunov_certified(self, line, unit_interval, isolation):
        """x1² 는 x' = −x − x³ 의 랴푸노프 함수"""
        flow = GeneralFlow.from_texts(line, ["-x1 - x1^3"])
        cert = verify_isolating_neighborhood(flow, unit_interval, isolation=isolation)
        lyap = verify_lyapunov(make_field(line, "x1^2"), flow, cert, isolation=isolation)
        assert lyap.verdict is Verdict.CERTIFIED
        assert lyap.margin > 0

    def test_lyapunov_refuted(self, line, unit_interval, isolation):
        """흐름을 따라 증가하는 함수는 반증"""
        flow = GeneralFlow.from_texts(line, ["-x1 - x1^3"])
        cert = verify_isolating_neighborhood(flow, unit_interval, isolation=isolation)
        lyap = verify_lyapunov(make_field(line, "-x1^2"), flow, cert, isolation=isolation)
        assert lyap.verdict is Verdict.REFUTED
        assert lyap.reason == "f_phi does not decrease along the flow off S"

    def test_attractor_index(self, line, unit_interval, isolation):
        """끌개: HI_0 = Z"""
        flow = GeneralFlow.from_texts(line, ["-x1 - x1^3"])
        result = mcf_homology(flow, unit_interval, make_field(line, "x1^2"), isolation=isolation)
        assert result.homology.betti_numbers() == (1,)
        assert result.lyapunov.certified
        assert result.flow_certificate.certified

    def test_hyperbolic_saddle_index(self, square, inner_square, isolation):
        """x' = (x1, −x2): HI_1 = Z"""
        flow = GeneralFlow.from_texts(square, ["x1", "-x2"])
        result = mcf_homology(flow, inner_square, make_field(square, "x2^2 - x1^2"), isolation=isolation)
        assert result.homology.betti_numbers() == (0, 1)

    def test_gradient_flow_matches_local_morse(self, well, saddle, unit_interval, inner_square, isolation):
        """기울기 흐름이면 HI_* = HM_* (f 자신을 랴푸노프 함수로)"""
        for f, N, betti in ((well, unit_interval, (1,)), (saddle, inner_square, (0, 1))):
            hi = mcf_homology(_gradient(f), N, f, isolation=isolation)
            hm = local_morse_homology(f, None, N, isolation=isolation)
            assert hi.homology.betti_numbers() == hm.homology.betti_numbers() == betti

    def test_index_independent_of_lyapunov_function(self, line, unit_interval, isolation):
        """서로 다른 랴푸노프 함수 x1², 2x1² + x1⁴ 가 같은 지표"""
        flow = GeneralFlow.from_texts(line, ["-x1 - x1^3"])
        a = mcf_homology(flow, unit_interval, make_field(line, "x1^2"), isolation=isolation)
        b = mcf_homology(flow, unit_interval, make_field(line, "2*x1^2 + x1^4"), isolation=isolation)
        assert a.homology.betti_numbers() == b.homology.betti_numbers() == (1,)

    def test_longer_time_cap_keeps_certificate(self, line, unit_interval, isolation):
        """T_max 를 늘려도 인증은 유지"""
        flow = GeneralFlow.from_texts(line, ["-x1 - x1^3"])
        for t_max in (isolation.t_max, 2 * isolation.t_max, 4 * isolation.t_max):
            longer = isolation.model_copy(update={"t_max": t_max})
            assert verify_isolating_neighborhood(flow, unit_interval, isolation=longer).certified

    def test_reversed_flow_shifts_degree(self, line, unit_interval, isolation):
        """시간 역전 흐름의 척력점: HI_1 = Z"""
        flow = GeneralFlow.from_texts(line, ["-x1 - x1^3"]).reversed()
        result = mcf_homology(flow, unit_interval, make_field(line, "-x1^2"), isolation=isolation)
        assert result.homology.betti_numbers() == (0, 1)


class TestBoundaryExit:
    """박스 도메인 출구 면 호몰로지 테스트"""

    def test_bowl(self, square, isolation):
        """모든 면이 입구: H_*(M) = H_*(점)"""
        report = boundary_exit_homology(make_field(square, "x1^2 + x2^2"), isolation=isolation)
        assert {f.kind for f in report.faces} == {"entrance"}
        assert report.verdict is Verdict.CERTIFIED
        assert report.relative.betti_numbers() == (1, 0, 0)

    def test_cap(self, square, isolation):
        """모든 면이 출구: H_2 = Z"""
        report = boundary_exit_homology(make_field(square, "-x1^2 - x2^2"), isolation=isolation)
        assert {f.kind for f in report.faces} == {"exit"}
        assert report.verdict is Verdict.CERTIFIED
        assert report.morse.betti_numbers() == (0, 0, 1)

    def test_saddle(self, saddle, isolation):
        """x1 면만 출구: H_1 = Z"""
        report = boundary_exit_homology(saddle, isolation=isolation)
        kinds = {(f.axis, f.side): f.kind for f in report.faces}
        assert kinds[(0, "lower")] == "exit"
        assert kinds[(1, "upper")] == "entrance"
        assert report.verdict is Verdict.CERTIFIED
        assert report.relative.betti_numbers() == (0, 1, 0)

    def test_mixed_face_inconclusive(self, square, isolation):
        """흐름이 면에 접하면 판정 불가"""
        report = boundary_exit_homology(make_field(square, "x1"), isolation=isolation)
        assert report.verdict is Verdict.INCONCLUSIVE
        assert report.relative is None

    def test_torus_rejected(self, height):
        """토러스에는 경계가 없음"""
        with pytest.raises(DomainError):
            boundary_exit_homology(height)


class TestFlowMaps:
    """흐름 사상/끌어오기/고립 사상 테스트"""

    def test_identity_is_flow_map(self, line, unit_interval, isolation):
        """항등사상은 같은 흐름 사이의 흐름 사상"""
        flow = GeneralFlow.from_texts(line, ["-x1"])
        report = verify_flow_map(identity_map(line), flow, flow, region_B=unit_interval, isolation=isolation)
        assert report.certified
        assert report.max_residual == 0.0
        assert report.proper

    def test_shift_is_not_equivariant(self, line, unit_interval, isolation):
        """x ↦ x + 0.5 는 x' = −x 와 교환하지 않음"""
        flow = GeneralFlow.from_texts(line, ["-x1"])
        shift = ExpressionMap(make_map(line, line, ["x1 + 0.5"]))
        report = verify_flow_map(shift, flow, flow, region_B=unit_interval, isolation=isolation)
        assert report.verdict is Verdict.REFUTED
        assert report.max_residual > 0.1
        assert report.worst is not None

    def test_blow_up_samples_skipped(self, line, unit_interval, isolation):
        """양쪽 흐름이 모두 유한 시간에 폭주하는 표본은 건너뛰고 인증"""
        flow = GeneralFlow.from_texts(line, ["-x1 - x1^3"])
        report = verify_flow_map(identity_map(line), flow, flow, region_B=unit_interval, isolation=isolation)
        assert report.certified
        assert report.undefined > 0
        assert report.samples > 0
        assert report.max_residual < isolation.equivariance_tol

    def test_samples_drawn_from_target_region(self, line, unit_interval, isolation):
        """표본은 h(p) ∈ N_B 인 점만"""
        flow = GeneralFlow.from_texts(line, ["-x1"])
        shift = ExpressionMap(make_map(line, line, ["x1 + 0.5"]))
        report = verify_flow_map(shift, flow, flow, region_B=unit_interval, isolation=isolation)
        assert -1.0 <= report.worst["point"][0] + 0.5 <= 1.0

    def test_pullback_of_identity(self, line, unit_interval, isolation):
        """항등사상으로 끌어온 근방은 N 자신"""
        flow = GeneralFlow.from_texts(line, ["-x1 - x1^3"])
        pull = pullback_neighborhood(identity_map(line), unit_interval, flow_A=flow, flow_B=flow, isolation=isolation)
        assert pull.certified
        assert len(pull.region.boxes) == 1
        box = pull.region.boxes[0]
        assert box.lower[0] == pytest.approx(-1.0, abs=1e-2)
        assert box.upper[0] == pytest.approx(1.0, abs=1e-2)

    def test_isolated_identity(self, well, unit_interval, isolation):
        """S_h = {0}, 경계에서 충분히 떨어짐"""
        flow = _gradient(well)
        report = verify_isolated_map(identity_map(well.domain), flow, flow, unit_interval, unit_interval, isolation=isolation)
        assert report.certified
        assert [float(p[0]) for p in report.s_h] == pytest.approx([0.0])
        assert report.min_margin == pytest.approx(1.0)

    def test_isolated_map_refuted(self, well, line, isolation):
        """평형점이 경계 위면 h 는 고립되지 않음"""
        N = Region.from_bounds(line, [[[0.0, 1.0]]])
        flow = _gradient(well)
        report = verify_isolated_map(identity_map(line), flow, flow, N, N, isolation=isolation)
        assert report.verdict is Verdict.REFUTED
        assert report.offending

    def test_mcf_induced_identity(self, line, unit_interval, isolation):
        """항등 흐름 사상은 HI_0 에서 항등"""
        flow = GeneralFlow.from_texts(line, ["-x1 - x1^3"])
        result = mcf_induced_map(identity_map(line), flow, flow, unit_interval, make_field(line, "x1^2"), isolation=isolation)
        assert {k: m.to_rows() for k, m in result.on_homology.items()} == {0: [[1]]}
        assert result.pullback.certified
        assert result.flow_map.certified


class TestIsolatedHomotopy:
    """매개변수 족의 고립성 테스트"""

    @staticmethod
    def _family(line, unit_interval, isolation):
        def check(v):
            moving = make_field(line, f"(x1 - {v})^2")
            return verify_isolating_neighborhood(_gradient(moving), unit_interval, isolation=isolation)

        return check

    def test_isolated_throughout(self, line, unit_interval, isolation):
        """평형점이 [0, 0.5] 에서만 움직이면 끝까지 고립"""
        report = verify_isolated_homotopy(self._family(line, unit_interval, isolation), 0.0, 0.5, points=3)
        assert report.holds
        assert report.violated_range is None
        assert report.notes == []

    def test_violation_located(self, line, unit_interval, isolation):
        """평형점이 ∂N 을 지나는 구간을 이분 탐색으로 찾음"""
        report = verify_isolated_homotopy(self._family(line, unit_interval, isolation), 0.0, 1.5, points=3)
        assert not report.holds
        assert report.verdict is Verdict.REFUTED
        lo, hi = report.violated_range
        assert lo - 2e-2 <= 1.0 <= hi + 2e-2
